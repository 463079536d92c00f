"""Exact spectral analysis of the single-doorway Hamiltonian.

The full Hamiltonian couples one doorway state (energy 0) to N background
levels ``d_j`` through matrix elements ``V_j``. Its eigenvalues are the N+1
roots of the secular function

    g(E) = E - sum_j |V_j|^2 / (E - d_j),

which is strictly increasing between consecutive poles, so every root is
bracketed. The doorway weight of eigenvalue E_m is

    w_m = 1 / (1 + sum_j |V_j|^2 / (E_m - d_j)^2).

Roots are stored internally as ``(origin pole, offset)`` pairs so that
distances ``E_m - d_j`` stay accurate even when a root hugs its pole.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

try:  # optional JIT for the per-root iteration; numpy fallback otherwise
    import numba as _compiled
except ImportError:  # pragma: no cover
    _compiled = None

from .ensembles import CouplingVector, Spectrum
from .errors import InvalidArgumentError, NumericalFailureError

__all__ = [
    "SpectralDecomposition",
    "secular_eigenvalues",
    "doorway_weights",
    "decompose",
    "dense_eigen_oracle",
    "survival_probability_exact",
    "ipr_exact",
    "DENSE_ORACLE_MAX_N",
]

DENSE_ORACLE_MAX_N = 2000
_EPS = np.finfo(float).eps
_MAX_ITER = 200


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenvalues of the full Hamiltonian and doorway weights |<s|m>|^2."""

    eigenvalues: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return self.eigenvalues.size


def _check_inputs(spectrum: Spectrum, coupling: CouplingVector):
    d = np.asarray(spectrum.levels, dtype=float)
    c = np.asarray(coupling.squared_magnitudes, dtype=float)
    if d.ndim != 1 or c.shape != d.shape:
        raise InvalidArgumentError(
            f"spectrum has {d.size} levels but coupling has {c.size} entries"
        )
    if d.size and np.any(np.diff(d) <= 0):
        raise InvalidArgumentError("background levels must be strictly increasing")
    if np.any(c < 0) or not np.all(np.isfinite(c)) or not np.all(np.isfinite(d)):
        raise InvalidArgumentError("levels and couplings must be finite")
    return d, c


def _brackets(d, c):
    """Anchor pole, offset bracket and start point for each of the n+1 roots.

    Root r lies in (d[r-1], d[r]) with exterior bounds +-radius, where
    ``radius = max|d| + sqrt(sum c)`` bounds the spectrum. Each interior root
    is anchored at the closer pole, decided by the sign of g at the midpoint,
    and solved for its offset from that pole.
    """
    n = d.size
    radius = float(np.max(np.abs(d))) + math.sqrt(float(np.sum(c)))
    radius = radius * (1.0 + 1e-12) + 1e-300
    left = np.concatenate(([-radius], d))
    right = np.concatenate((d, [radius]))
    mid = 0.5 * (left + right)
    if _compiled is not None:
        g_mid = _secular_compiled(mid, d, c)
    else:
        g_mid = mid - np.reciprocal(mid[:, None] - d[None, :]) @ c

    origin = np.empty(n + 1, dtype=np.intp)
    lo = np.empty(n + 1)
    hi = np.empty(n + 1)
    interior = np.arange(1, n)
    use_left = g_mid[interior] >= 0
    origin[interior] = np.where(use_left, interior - 1, interior)
    pole = d[origin[interior]]
    lo[interior] = np.where(use_left, 0.0, mid[interior] - pole)
    hi[interior] = np.where(use_left, mid[interior] - pole, 0.0)
    origin[0], lo[0], hi[0] = 0, -radius - d[0], 0.0
    origin[n], lo[n], hi[n] = n - 1, 0.0, radius - d[n - 1]
    positive = lo >= 0  # side of the anchor pole on which the root sits
    delta = np.where(positive, 0.5 * hi, 0.5 * lo)
    return origin, lo, hi, positive, delta


def _model_step(g, gp, co, dl, positive, lo, hi):
    """Next offset from the anchor-pole model ``-co/delta + A + B delta``.

    The anchor pole is kept exactly and the rest of g is linearised, so the
    step solves a quadratic; the root on the bracketed side is taken in its
    cancellation-free form. Falls back to bisection outside the bracket.
    """
    b_coef = np.maximum(gp - co / (dl * dl), 1.0)
    p = g + co / dl - b_coef * dl
    root_disc = np.sqrt(p * p + 4.0 * b_coef * co)
    with np.errstate(divide="ignore", invalid="ignore"):
        step_pos = np.where(p > 0, 2.0 * co / (p + root_disc), (root_disc - p) / (2.0 * b_coef))
        step_neg = np.where(p < 0, -2.0 * co / (root_disc - p), -(p + root_disc) / (2.0 * b_coef))
    new = np.where(positive, step_pos, step_neg)
    inside = (new > lo) & (new < hi) & np.isfinite(new)
    return np.where(inside, new, 0.5 * (lo + hi))


def _solve_numpy(d, c):
    """Vectorised iteration over all roots; returns ``(origin, delta, weights)``."""
    n = d.size
    origin, lo, hi, positive, delta = _brackets(d, c)
    diff0 = d[origin][:, None] - d[None, :]
    c_origin = c[origin]
    active = np.arange(n + 1)

    for _ in range(_MAX_ITER):
        dl = delta[active]
        rows = diff0 if active.size == n + 1 else diff0[active]
        # inv[m, j] = 1 / (E_m - d_j); the three sums are matrix-vector products
        inv = rows + dl[:, None]
        np.reciprocal(inv, out=inv)
        energy = d[origin[active]] + dl
        g = energy - inv @ c
        noise = 16.0 * _EPS * (np.abs(energy) + np.abs(inv) @ c)
        np.multiply(inv, inv, out=inv)
        gp = 1.0 + inv @ c

        lo_a = np.where(g < 0, dl, lo[active])
        hi_a = np.where(g > 0, dl, hi[active])
        lo[active], hi[active] = lo_a, hi_a
        new = _model_step(g, gp, c_origin[active], dl, positive[active], lo_a, hi_a)

        at_root = np.abs(g) <= noise
        done = at_root | (np.abs(new - dl) <= 1e-14 * np.abs(dl))
        done |= (hi_a - lo_a) <= 1e-13 * np.maximum(np.abs(lo_a), np.abs(hi_a))
        delta[active] = np.where(at_root, dl, new)
        active = active[~done]
        if active.size == 0:
            break
    else:
        raise NumericalFailureError(
            "secular iteration did not converge", unconverged_roots=active.tolist()[:10]
        )
    _check_sides(positive, delta)
    return origin, delta, _weights_from_offsets(d, c, origin, delta)


def _check_sides(positive, delta):
    bad = np.flatnonzero((positive & (delta <= 0)) | (~positive & (delta >= 0)))
    if bad.size:
        raise NumericalFailureError("secular root collapsed onto its pole", intervals=bad.tolist()[:10])


def _weights_from_offsets(d, c, origin, delta):
    inv = (d[origin][:, None] - d[None, :]) + delta[:, None]
    np.reciprocal(inv, out=inv)
    np.multiply(inv, inv, out=inv)
    return 1.0 / (1.0 + inv @ c)


if _compiled is not None:

    @_compiled.njit(cache=True, nogil=True)
    def _secular_compiled(x, d, c):
        out = np.empty(x.size)
        for i in range(x.size):
            acc = 0.0
            for j in range(d.size):
                acc += c[j] / (x[i] - d[j])
            out[i] = x[i] - acc
        return out

    @_compiled.njit(cache=True, nogil=True)
    def _iterate_compiled(d, c, origin, lo, hi, positive, delta, weights, max_iter):
        # same iteration as _solve_numpy, one root at a time
        n = d.size
        eps = 2.220446049250313e-16
        failed = -1
        for r in range(n + 1):
            k = origin[r]
            dk = d[k]
            ck = c[k]
            dl = delta[r]
            a = lo[r]
            b = hi[r]
            converged = False
            for _ in range(max_iter):
                s1 = 0.0
                s2 = 0.0
                sa = 0.0
                for j in range(n):
                    inv = 1.0 / ((dk - d[j]) + dl)
                    t = c[j] * inv
                    s1 += t
                    sa += abs(t)
                    s2 += t * inv
                e = dk + dl
                g = e - s1
                if g < 0:
                    a = dl
                elif g > 0:
                    b = dl
                if abs(g) <= 16.0 * eps * (abs(e) + sa):
                    converged = True
                    break
                bc = max(1.0 + s2 - ck / (dl * dl), 1.0)
                p = g + ck / dl - bc * dl
                rd = math.sqrt(p * p + 4.0 * bc * ck)
                if positive[r]:
                    new = 2.0 * ck / (p + rd) if p > 0 else (rd - p) / (2.0 * bc)
                else:
                    new = -2.0 * ck / (rd - p) if p < 0 else -(p + rd) / (2.0 * bc)
                if not (new > a and new < b):
                    new = 0.5 * (a + b)
                step_small = abs(new - dl) <= 1e-14 * abs(dl)
                dl = new
                if step_small or (b - a) <= 1e-13 * max(abs(a), abs(b)):
                    converged = True
                    break
            delta[r] = dl
            s2 = 0.0
            for j in range(n):
                inv = 1.0 / ((dk - d[j]) + dl)
                s2 += c[j] * inv * inv
            weights[r] = 1.0 / (1.0 + s2)
            if not converged and failed < 0:
                failed = r
        return failed


def _solve_compiled(d, c):
    origin, lo, hi, positive, delta = _brackets(d, c)
    weights = np.empty(d.size + 1)
    failed = _iterate_compiled(d, c, origin, lo, hi, positive, delta, weights, _MAX_ITER)
    if failed >= 0:
        raise NumericalFailureError("secular iteration did not converge", unconverged_roots=[failed])
    _check_sides(positive, delta)
    return origin, delta, weights


def _solve(d, c, backend=None):
    """Roots of the secular function for strictly positive couplings ``c``.

    Returns ``(origin, delta, weights)``; root ``m`` equals
    ``d[origin[m]] + delta[m]`` and the n+1 roots are in increasing order.
    ``backend`` is ``"numpy"``, ``"compiled"`` or None (compiled if available).
    """
    if backend is None:
        backend = "compiled" if _compiled is not None else "numpy"
    if backend == "compiled":
        if _compiled is None:
            raise InvalidArgumentError("compiled backend needs numba")
        return _solve_compiled(d, c)
    if backend == "numpy":
        return _solve_numpy(d, c)
    raise InvalidArgumentError(f"unknown backend {backend!r}")


def _solve_with_zero_couplings(d, c, backend=None):
    """Eigenvalues and weights, handling zero couplings as exact decoupled levels."""
    nonzero = c > 0
    if not np.any(nonzero):
        eig = np.concatenate(([0.0], d))
        w = np.zeros(d.size + 1)
        w[0] = 1.0
    else:
        da, ca = d[nonzero], c[nonzero]
        origin, delta, w = _solve(da, ca, backend)
        eig = da[origin] + delta
        if not np.all(nonzero):
            eig = np.concatenate((eig, d[~nonzero]))
            w = np.concatenate((w, np.zeros(int(np.sum(~nonzero)))))
    order = np.argsort(eig, kind="stable")
    return eig[order], w[order]


def secular_eigenvalues(spectrum: Spectrum, coupling: CouplingVector) -> np.ndarray:
    """All N+1 eigenvalues of the doorway Hamiltonian, sorted ascending.

    Levels whose coupling vanishes are returned unchanged (they decouple).

    Raises
    ------
    InvalidArgumentError
        If the levels are not strictly increasing.
    NumericalFailureError
        If a root cannot be bracketed or converged.
    """
    d, c = _check_inputs(spectrum, coupling)
    return _solve_with_zero_couplings(d, c)[0]


def doorway_weights(spectrum: Spectrum, coupling: CouplingVector, eigenvalues) -> np.ndarray:
    """Doorway weights ``|<s|m>|^2`` for given exact eigenvalues.

    Eigenvalues that coincide with a decoupled level get weight 0.
    """
    d, c = _check_inputs(spectrum, coupling)
    eig = np.asarray(eigenvalues, dtype=float)
    nonzero = c > 0
    da, ca = d[nonzero], c[nonzero]
    diff = eig[:, None] - da[None, :]
    hit = diff == 0
    if np.any(hit):
        m, j = np.argwhere(hit)[0]
        raise NumericalFailureError(
            "eigenvalue coincides with a coupled background level",
            eigenvalue_index=int(m),
            level_index=int(np.flatnonzero(nonzero)[j]),
        )
    w = 1.0 / (1.0 + (ca / (diff * diff)).sum(axis=1))
    if not np.all(nonzero):
        # a decoupled level is its own eigenvector, orthogonal to the doorway
        decoupled = np.isin(eig, d[~nonzero])
        w[decoupled] = 0.0
    return w


def decompose(
    spectrum: Spectrum, coupling: CouplingVector, *, backend: str | None = None
) -> SpectralDecomposition:
    """Eigenvalues and doorway weights via the secular equation (O(N^2)).

    ``backend`` selects the root iteration: ``"compiled"`` (numba, default
    when installed) or ``"numpy"`` (vectorised). Both give the same roots to
    rounding.
    """
    d, c = _check_inputs(spectrum, coupling)
    eig, w = _solve_with_zero_couplings(d, c, backend)
    return SpectralDecomposition(eig, w)


def dense_eigen_oracle(spectrum: Spectrum, coupling: CouplingVector) -> SpectralDecomposition:
    """Reference decomposition by full diagonalisation of the (N+1)x(N+1) matrix."""
    d = np.asarray(spectrum.levels, dtype=float)
    v = np.asarray(coupling.entries)
    if d.size > DENSE_ORACLE_MAX_N:
        raise InvalidArgumentError(f"dense oracle limited to N <= {DENSE_ORACLE_MAX_N}")
    if v.shape != d.shape:
        raise InvalidArgumentError("spectrum and coupling sizes differ")
    n = d.size
    h = np.zeros((n + 1, n + 1), dtype=np.result_type(v.dtype, float))
    h[0, 1:] = v
    h[1:, 0] = np.conj(v)
    h[np.arange(1, n + 1), np.arange(1, n + 1)] = d
    try:
        eig, vec = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError("dense eigensolver failed", N=n) from exc
    w = np.abs(vec[0]) ** 2
    return SpectralDecomposition(eig, w)


def survival_probability_exact(decomp: SpectralDecomposition, tau, D):
    """``|sum_m w_m exp(-i E_m tau / D)|^2`` for scalar or array ``tau``."""
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr < 0):
        raise InvalidArgumentError("tau must be non-negative")
    phase = np.multiply.outer(tau_arr, decomp.eigenvalues / D)
    re = np.cos(phase) @ decomp.weights
    im = np.sin(phase) @ decomp.weights
    p = re * re + im * im
    return float(p) if np.ndim(p) == 0 else p


def ipr_exact(decomp: SpectralDecomposition) -> float:
    """Inverse participation ratio ``sum_m w_m^2``."""
    w = decomp.weights
    return float(np.dot(w, w))
