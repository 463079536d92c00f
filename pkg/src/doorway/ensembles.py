"""Background spectra and coupling vectors for the doorway model.

Backgrounds are either regular (independent uniform levels) or chaotic
(Gaussian orthogonal/unitary ensembles with weight ``exp(-beta_b/2 tr H^2)``).
Couplings are real or complex Gaussian vectors whose variance is fixed by the
dimensionless strength ``lam = v / D``.

Every sampler is a pure function of its arguments. Per-realization seeds come
from :func:`realization_seed`, a counter-based split of one master seed, so
realizations can be drawn in any order or in parallel.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InvalidArgumentError, NumericalFailureError

__all__ = [
    "Background",
    "Coupling",
    "EnsembleSpec",
    "Spectrum",
    "CouplingVector",
    "mean_level_spacing",
    "realization_seed",
    "sample_poisson_background",
    "sample_gaussian_background",
    "sample_background",
    "sample_coupling",
    "STREAM_BACKGROUND",
    "STREAM_COUPLING",
]

STREAM_BACKGROUND = 0
STREAM_COUPLING = 1


class Background(str, enum.Enum):
    POISSON = "poisson"
    GOE = "goe"
    GUE = "gue"

    @property
    def beta(self):
        """Dyson index of a Gaussian background (None for Poisson)."""
        return {"goe": 1, "gue": 2}.get(self.value)


class Coupling(enum.IntEnum):
    """Coupling symmetry class; the value is the Dyson index beta."""

    REAL = 1
    COMPLEX = 2


def mean_level_spacing(background, N):
    """Mean level spacing at the band centre.

    ``1/sqrt(N)`` for the uniform Poisson band, ``pi/sqrt(2N)`` for GOE and
    GUE alike.
    """
    background = Background(background)
    if N < 2:
        raise InvalidArgumentError(f"N must be >= 2, got {N}")
    if background is Background.POISSON:
        return 1.0 / math.sqrt(N)
    return math.pi / math.sqrt(2.0 * N)


@dataclass(frozen=True)
class EnsembleSpec:
    """Complete description of one statistical model.

    Parameters
    ----------
    background : Background or str
    coupling : Coupling or int
        ``Coupling.REAL`` (beta=1) or ``Coupling.COMPLEX`` (beta=2).
    N : int
        Number of background states, at least 2.
    lam : float
        Dimensionless coupling strength ``v / D``.
    master_seed : int
        Unsigned 64-bit seed from which every realization seed is derived.
    """

    background: Background
    coupling: Coupling
    N: int
    lam: float
    master_seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "background", Background(self.background))
            object.__setattr__(self, "coupling", Coupling(self.coupling))
        except ValueError as exc:
            raise InvalidArgumentError(str(exc)) from None
        if int(self.N) != self.N or self.N < 2:
            raise InvalidArgumentError(f"N must be an integer >= 2, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise InvalidArgumentError(f"lam must be finite and >= 0, got {self.lam!r}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise InvalidArgumentError("master_seed must be an unsigned 64-bit integer")

    @property
    def D(self):
        return mean_level_spacing(self.background, self.N)

    @property
    def v(self):
        """Coupling scale ``lam * D``."""
        return self.lam * self.D

    @property
    def beta(self):
        return int(self.coupling)

    def to_dict(self):
        return {
            "background": self.background.value,
            "coupling": int(self.coupling),
            "N": self.N,
            "lam": self.lam,
            "master_seed": int(self.master_seed),
        }


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Sorted background levels together with the band-centre spacing."""

    levels: np.ndarray
    D: float


@dataclass(frozen=True, eq=False)
class CouplingVector:
    """Coupling matrix elements ``V_nu`` and their squared magnitudes."""

    entries: np.ndarray
    squared_magnitudes: np.ndarray = field(init=False)

    def __post_init__(self):
        entries = np.asarray(self.entries)
        object.__setattr__(self, "entries", entries)
        if np.iscomplexobj(entries):
            mag = entries.real**2 + entries.imag**2
        else:
            mag = entries * entries
        object.__setattr__(self, "squared_magnitudes", mag)

    @property
    def beta(self):
        return 2 if np.iscomplexobj(self.entries) else 1


def realization_seed(master_seed, stream, index):
    """Seed for realization ``index`` of ``stream``.

    Implemented with :class:`numpy.random.SeedSequence` spawn keys, which hash
    ``(master_seed, stream, index)`` into independent generator states.
    """
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(stream), int(index)))


def _strictly_increasing(levels):
    """Sort and nudge exact ties upward by one ulp."""
    levels = np.sort(np.asarray(levels, dtype=float))
    dup = np.flatnonzero(np.diff(levels) <= 0)
    for i in dup:
        # earlier fixes can cascade into the next pair, so re-check in order
        if levels[i + 1] <= levels[i]:
            levels[i + 1] = np.nextafter(levels[i], np.inf)
    return levels


def sample_poisson_background(N, seed):
    """Uniform independent levels on ``[-sqrt(N)/2, sqrt(N)/2]``, D = 1/sqrt(N)."""
    if N < 2:
        raise InvalidArgumentError(f"N must be >= 2, got {N}")
    rng = np.random.default_rng(seed)
    half = 0.5 * math.sqrt(N)
    levels = rng.uniform(-half, half, size=N)
    return Spectrum(_strictly_increasing(levels), 1.0 / math.sqrt(N))


def _dense_gaussian(N, beta_b, rng):
    if beta_b == 1:
        a = rng.standard_normal((N, N))
        return 0.5 * (a + a.T)
    a = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / math.sqrt(2.0)
    return 0.5 * (a + a.conj().T)


def _tridiagonal_gaussian_levels(N, beta_b, rng):
    # Dumitriu-Edelman beta-Hermite model: same eigenvalue law as the dense
    # ensemble after rescaling by 1/sqrt(beta_b).
    diag = rng.standard_normal(N)
    dof = beta_b * np.arange(N - 1, 0, -1)
    off = np.sqrt(rng.chisquare(dof) / 2.0)
    levels = scipy.linalg.eigvalsh_tridiagonal(diag, off)
    return levels / math.sqrt(beta_b)


def sample_gaussian_background(N, beta_b, seed, method="dense"):
    """Eigenvalues of a GOE (``beta_b=1``) or GUE (``beta_b=2``) matrix.

    The matrix density is ``exp(-beta_b/2 tr H^2)``: diagonal variance
    ``1/beta_b`` and off-diagonal variance ``1/2`` per element pair.

    Parameters
    ----------
    method : {"dense", "tridiagonal"}
        ``"dense"`` diagonalises the full matrix. ``"tridiagonal"`` samples
        the equivalent beta-Hermite tridiagonal model in O(N^2); the
        eigenvalue distribution is identical.
    """
    if N < 2:
        raise InvalidArgumentError(f"N must be >= 2, got {N}")
    if beta_b not in (1, 2):
        raise InvalidArgumentError(f"beta_b must be 1 or 2, got {beta_b!r}")
    rng = np.random.default_rng(seed)
    try:
        if method == "dense":
            levels = np.linalg.eigvalsh(_dense_gaussian(N, beta_b, rng))
        elif method == "tridiagonal":
            levels = _tridiagonal_gaussian_levels(N, beta_b, rng)
        else:
            raise InvalidArgumentError(f"unknown method {method!r}")
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError("eigensolver did not converge", N=N) from exc
    return Spectrum(_strictly_increasing(levels), math.pi / math.sqrt(2.0 * N))


def sample_background(background, N, seed, method="dense"):
    """Dispatch on the background kind."""
    background = Background(background)
    if background is Background.POISSON:
        return sample_poisson_background(N, seed)
    return sample_gaussian_background(N, background.beta, seed, method=method)


def sample_coupling(N, beta, lam, D, seed):
    """Gaussian couplings with ``E|V|^2 = (lam*D)^2``.

    Real couplings (``beta=1``) are ``N(0, v^2)``; complex ones (``beta=2``)
    have independent real and imaginary parts of variance ``v^2/2``.
    """
    if N < 1:
        raise InvalidArgumentError(f"N must be >= 1, got {N}")
    if beta not in (1, 2):
        raise InvalidArgumentError(f"beta must be 1 or 2, got {beta!r}")
    if not lam >= 0:
        raise InvalidArgumentError(f"lam must be >= 0, got {lam!r}")
    rng = np.random.default_rng(seed)
    v = lam * D
    if beta == 1:
        return CouplingVector(v * rng.standard_normal(N))
    z = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    return CouplingVector((v / math.sqrt(2.0)) * z)
