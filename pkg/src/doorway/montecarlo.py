"""Ensemble averages over sampled doorway Hamiltonians.

Every estimator draws realization ``i`` from seeds derived from
``(master_seed, stream, i)``, so results do not depend on the number of
worker threads: per-realization values are collected in index order and
reduced the same way whatever the parallelism.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.optimize

from .arrowhead import decompose, ipr_exact, survival_probability_exact
from .ensembles import (
    STREAM_BACKGROUND,
    STREAM_COUPLING,
    Background,
    EnsembleSpec,
    mean_level_spacing,
    realization_seed,
    sample_background,
    sample_coupling,
)
from .errors import InvalidArgumentError, NumericalFailureError

__all__ = [
    "SurvivalCurve",
    "Estimate",
    "LdosHistogram",
    "LorentzianFit",
    "REstimate",
    "draw_realization",
    "estimate_survival_curve",
    "estimate_ipr",
    "estimate_ldos",
    "fit_lorentzian",
    "estimate_R",
    "estimate_R_points",
    "DEFAULT_SAMPLER",
]

# Gaussian backgrounds are drawn from the tridiagonal beta-Hermite model by
# default: same eigenvalue law as the dense matrix at O(N^2) cost.
DEFAULT_SAMPLER = "tridiagonal"
_CHUNK = 16


@dataclass(frozen=True, eq=False)
class SurvivalCurve:
    """Mean survival probability on a tau grid (units of 1/D)."""

    tau_grid: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_samples: int
    spec: EnsembleSpec


class Estimate(NamedTuple):
    mean: float
    stderr: float


@dataclass(frozen=True, eq=False)
class LdosHistogram:
    """Doorway weight per energy bin, normalised to unit integral.

    ``bin_edges`` are in units of D. ``stderr`` is the per-bin standard error
    over realizations; ``captured_weight`` is the mean fraction of the doorway
    weight that fell inside the bins.
    """

    bin_edges: np.ndarray
    density: np.ndarray
    stderr: np.ndarray
    n_samples: int
    captured_weight: float

    @property
    def centers(self):
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])


@dataclass(frozen=True)
class LorentzianFit:
    hwhm: float
    hwhm_stderr: float
    centre: float
    amplitude: float
    reduced_chi2: float
    dof: int


@dataclass(frozen=True)
class REstimate:
    """Monte Carlo estimate of the background average R(k, s).

    ``stderr`` is the standard error of the complex mean,
    ``sqrt(var(Re) + var(Im)) / sqrt(n)``.
    """

    value: complex
    stderr: float
    stderr_re: float
    stderr_im: float
    n_samples: int


def draw_realization(spec: EnsembleSpec, index: int, method: str = DEFAULT_SAMPLER):
    """Background and coupling for realization ``index`` of ``spec``."""
    spectrum = sample_background(
        spec.background,
        spec.N,
        realization_seed(spec.master_seed, STREAM_BACKGROUND, index),
        method=method,
    )
    coupling = sample_coupling(
        spec.N,
        spec.beta,
        spec.lam,
        spectrum.D,
        realization_seed(spec.master_seed, STREAM_COUPLING, index),
    )
    return spectrum, coupling


def _seed_details(master_seed, index):
    return {"master_seed": int(master_seed), "realization": int(index)}


def _collect(func: Callable[[int], np.ndarray], n: int, threads: int, master_seed) -> np.ndarray:
    """Stack ``func(i)`` for ``i`` in ``range(n)``, in index order."""
    if threads < 1:
        raise InvalidArgumentError(f"threads must be >= 1, got {threads}")

    def guarded(i):
        try:
            return func(i)
        except NumericalFailureError as exc:
            raise NumericalFailureError(
                f"realization failed: {exc.args[0]}", **exc.details, **_seed_details(master_seed, i)
            ) from exc

    def chunk(start):
        return [guarded(i) for i in range(start, min(start + _CHUNK, n))]

    if threads == 1:
        rows = [guarded(i) for i in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = [r for part in pool.map(chunk, range(0, n, _CHUNK)) for r in part]
    return np.asarray(rows)


def _mean_stderr(samples: np.ndarray):
    """Per-column mean and standard error; rows are realizations.

    The reduction runs along contiguous memory so numpy uses pairwise
    summation.
    """
    cols = np.ascontiguousarray(np.asarray(samples).T)
    n = cols.shape[-1]
    mean = cols.mean(axis=-1)
    stderr = cols.std(axis=-1, ddof=1) / math.sqrt(n)
    return mean, stderr


def _check_n(n_samples):
    if int(n_samples) != n_samples or n_samples < 2:
        raise InvalidArgumentError(f"n_samples must be an integer >= 2, got {n_samples!r}")
    return int(n_samples)


def estimate_survival_curve(
    spec: EnsembleSpec,
    tau_grid,
    n_samples: int,
    *,
    threads: int = 1,
    method: str = DEFAULT_SAMPLER,
) -> SurvivalCurve:
    """Ensemble-averaged survival probability with pointwise standard errors.

    Parameters
    ----------
    spec : EnsembleSpec
    tau_grid : array_like
        Non-negative times in units of the Heisenberg time 1/D.
    n_samples : int
        Number of joint (background, coupling) realizations, at least 2.
    threads : int
        Worker threads; the result is identical for any value.
    method : {"tridiagonal", "dense"}
        Sampler for Gaussian backgrounds.
    """
    n = _check_n(n_samples)
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or tau.size == 0:
        raise InvalidArgumentError("tau_grid must be a non-empty 1-D array")
    if not np.all(np.isfinite(tau)) or np.any(tau < 0):
        raise InvalidArgumentError("tau values must be finite and >= 0")

    def one(i):
        spectrum, coupling = draw_realization(spec, i, method)
        return survival_probability_exact(decompose(spectrum, coupling), tau, spectrum.D)

    mean, stderr = _mean_stderr(_collect(one, n, threads, spec.master_seed))
    # sum w = 1 only to rounding; pin the exact value at tau = 0
    at_zero = tau == 0
    mean[at_zero] = 1.0
    stderr[at_zero] = 0.0
    return SurvivalCurve(tau, mean, stderr, n, spec)


def estimate_ipr(
    spec: EnsembleSpec, n_samples: int, *, threads: int = 1, method: str = DEFAULT_SAMPLER
) -> Estimate:
    """Mean inverse participation ratio and its standard error."""
    n = _check_n(n_samples)

    def one(i):
        spectrum, coupling = draw_realization(spec, i, method)
        return ipr_exact(decompose(spectrum, coupling))

    mean, stderr = _mean_stderr(_collect(one, n, threads, spec.master_seed)[:, None])
    return Estimate(float(mean[0]), float(stderr[0]))


def estimate_ldos(
    spec: EnsembleSpec,
    bins,
    n_samples: int,
    *,
    threads: int = 1,
    method: str = DEFAULT_SAMPLER,
) -> LdosHistogram:
    """Histogram of the doorway weights ``w_m`` at ``E_m / D``.

    ``bins`` are increasing edges in units of D and must cover
    ``[-10 Gamma/D, 10 Gamma/D]`` with ``Gamma/D = 2 pi lam^2``.
    """
    n = _check_n(n_samples)
    edges = np.asarray(bins, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise InvalidArgumentError("bins must be at least two strictly increasing edges")
    reach = 10.0 * 2.0 * math.pi * spec.lam**2
    if edges[0] > -reach or edges[-1] < reach or not edges[0] <= 0 <= edges[-1]:
        raise InvalidArgumentError(f"bins must cover [-{reach:g}, {reach:g}] in units of D")
    widths = np.diff(edges)

    def one(i):
        spectrum, coupling = draw_realization(spec, i, method)
        decomp = decompose(spectrum, coupling)
        counts, _ = np.histogram(decomp.eigenvalues / spectrum.D, edges, weights=decomp.weights)
        return counts

    per_bin = _collect(one, n, threads, spec.master_seed)
    mean_counts, counts_err = _mean_stderr(per_bin)
    captured = float(mean_counts.sum())
    if captured <= 0:
        raise NumericalFailureError("no doorway weight fell inside the bins")
    density = mean_counts / (captured * widths)
    stderr = counts_err / (captured * widths)
    return LdosHistogram(edges, density, stderr, n, captured)


def _binned_lorentzian(edges, amplitude, centre, hwhm):
    """Lorentzian averaged over each bin: exact for any bin width."""
    upper = np.arctan((edges[1:] - centre) / hwhm)
    lower = np.arctan((edges[:-1] - centre) / hwhm)
    return amplitude * (upper - lower) / (math.pi * np.diff(edges))


def fit_lorentzian(hist: LdosHistogram, initial_hwhm: float = 1.0) -> LorentzianFit:
    """Weighted least-squares Lorentzian fit to an LDOS histogram.

    Free parameters are amplitude, centre and half-width (units of D); the
    model is the bin-averaged Lorentzian, so coarse bins add no bias.
    Bins with zero standard error carry no information and are left out.
    """
    use = hist.stderr > 0
    dof = int(np.count_nonzero(use)) - 3
    if dof < 1:
        raise InvalidArgumentError("need at least four bins with nonzero spread to fit")
    edges = hist.bin_edges

    def residuals(params):
        model = _binned_lorentzian(edges, *params)
        return ((hist.density - model) / np.where(use, hist.stderr, 1.0))[use]

    start = np.array([1.0, 0.0, max(initial_hwhm, 1e-3)])
    fit = scipy.optimize.least_squares(
        residuals, start, bounds=([0.0, -np.inf, 1e-9], [np.inf, np.inf, np.inf]), x_scale="jac"
    )
    if not fit.success:
        raise NumericalFailureError("Lorentzian fit did not converge", status=fit.status)
    chi2 = float(np.sum(fit.fun**2))
    try:
        cov = np.linalg.inv(fit.jac.T @ fit.jac)
        hwhm_err = float(math.sqrt(cov[2, 2]))
    except np.linalg.LinAlgError:
        hwhm_err = math.inf
    amplitude, centre, hwhm = (float(p) for p in fit.x)
    return LorentzianFit(hwhm, hwhm_err, centre, amplitude, chi2 / dof, dof)


def _log_r_factors(levels, D, k, s, lam):
    """``sum_mu log[x / (x + i b)]`` with ``x = E^2 - (Ds/2)^2``, ``b = k s D^2 lam^2``.

    Each ratio has positive real part, so its principal logarithm is
    ``-log1p((b/x)^2)/2 - i atan(b/x)``; summing these never overflows and is
    exactly conjugated by ``k -> -k``.
    """
    half = 0.5 * D * s
    x = (levels - half) * (levels + half)
    b = k * s * D * D * lam * lam
    scale = levels * levels + half * half
    tiny = np.abs(x) <= 1e-14 * scale
    if np.any(tiny):
        worst = int(np.argmin(np.abs(x)))
        raise NumericalFailureError(
            "background level sits on a zero of the R factor",
            level=float(levels[worst]),
            zero=float(abs(half)),
        )
    ratio = b / x
    return complex(-0.5 * np.sum(np.log1p(ratio * ratio)), -np.sum(np.arctan(ratio)))


def estimate_R(
    k: float,
    s: float,
    lam: float,
    N: int,
    beta_b: int,
    beta: int,
    n_samples: int,
    *,
    master_seed: int = 0,
    threads: int = 1,
    method: str = DEFAULT_SAMPLER,
) -> REstimate:
    """Finite-N background average of the doorway characteristic-polynomial ratio.

    Estimates ``< prod_mu [x_mu / (x_mu + i k s D^2 lam^2)]^(beta/2) >`` with
    ``x_mu = E_mu^2 - (D s / 2)^2`` over a GOE (``beta_b = 1``) or GUE
    (``beta_b = 2``) background; D is the background's band-centre spacing.
    ``beta = 2`` is the case with closed forms.

    ``k = 0`` returns exactly ``1 + 0j`` with zero error, without sampling.
    """
    return estimate_R_points(
        [(k, s)], lam, N, beta_b, beta, n_samples,
        master_seed=master_seed, threads=threads, method=method,
    )[0]


def estimate_R_points(
    points,
    lam: float,
    N: int,
    beta_b: int,
    beta: int,
    n_samples: int,
    *,
    master_seed: int = 0,
    threads: int = 1,
    method: str = DEFAULT_SAMPLER,
) -> list[REstimate]:
    """:func:`estimate_R` at several ``(k, s)`` points from one set of backgrounds.

    Background realization ``i`` is shared by all points (common random
    numbers), and each point gives the same result as a separate
    :func:`estimate_R` call with the same seed.
    """
    n = _check_n(n_samples)
    if beta_b not in (1, 2):
        raise InvalidArgumentError(f"beta_b must be 1 or 2, got {beta_b!r}")
    if beta not in (1, 2):
        raise InvalidArgumentError(f"beta must be 1 or 2, got {beta!r}")
    points = [(float(k), float(s)) for k, s in points]
    if not all(math.isfinite(k) and math.isfinite(s) for k, s in points):
        raise InvalidArgumentError("k and s must be finite")
    if not lam >= 0:
        raise InvalidArgumentError(f"lam must be >= 0, got {lam!r}")
    live = [j for j, (k, _) in enumerate(points) if k != 0 and lam != 0]
    results = [REstimate(1 + 0j, 0.0, 0.0, 0.0, n)] * len(points)
    if not live:
        return results
    background = Background.GOE if beta_b == 1 else Background.GUE
    D = mean_level_spacing(background, N)

    def one(i):
        spectrum = sample_background(
            background, N, realization_seed(master_seed, STREAM_BACKGROUND, i), method=method
        )
        row = []
        for j in live:
            k, s = points[j]
            value = np.exp(_log_r_factors(spectrum.levels, D, k, s, lam) * (0.5 * beta))
            row.extend((value.real, value.imag))
        return row

    mean, stderr = _mean_stderr(_collect(one, n, threads, master_seed))
    for pos, j in enumerate(live):
        re, im = 2 * pos, 2 * pos + 1
        results[j] = REstimate(
            complex(mean[re], mean[im]),
            float(math.hypot(stderr[re], stderr[im])),
            float(stderr[re]),
            float(stderr[im]),
            n,
        )
    return results
