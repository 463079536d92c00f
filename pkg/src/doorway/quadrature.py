"""Double-exponential (tanh-sinh) quadrature.

One engine covers every integral the analytic formulas need: endpoint
singularities of type ``x**-0.5``, ``(1-x)**-0.5`` and ``log``, plus
semi-infinite ranges with a known decaying envelope.

Integrands are vectorised: ``f`` receives a 1-D ndarray of abscissae and must
return an ndarray of the same shape. With ``complements=True`` the integrand is
called as ``f(x, x_minus_a, b_minus_x)`` where both distances are computed
without cancellation, which is what keeps ``(1-x)**-0.5`` accurate at nodes
that round to ``x == 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .errors import InvalidArgumentError, NumericalFailureError

__all__ = [
    "QuadratureResult",
    "integrate_finite",
    "integrate_semiinfinite",
    "level_estimates",
    "DEFAULT_BUDGET",
]

DEFAULT_BUDGET = 2**20

# Step of the coarsest trapezoidal rule in the t-domain; every later level
# halves it and only evaluates the new (odd) nodes.
_H0 = 0.125
# At |t| = 5.3 the endpoint distance 2/(1 + exp(pi*sinh(t))) is about 1e-137:
# small enough that the neglected end pieces of x**-0.5 or log singularities
# are far below double precision, large enough that integrands may form
# x**-2 without overflow.
_T_MAX = 5.3
_MIN_LEVEL = 1


@dataclass(frozen=True)
class QuadratureResult:
    """Value of an integral with its error estimate and cost."""

    value: float
    error_estimate: float
    evaluations: int
    levels: int = 0

    def __float__(self):
        return float(self.value)


def _nodes(level: int):
    """Unit-interval nodes for one refinement level.

    Returns ``(one_plus_u, one_minus_u, weight)`` where ``u`` are abscissae in
    (-1, 1) and ``weight`` already includes dx/dt (but not the step h).
    """
    h = _H0 / 2**level
    kmax = int(math.floor(_T_MAX / h))
    k = np.arange(-kmax, kmax + 1)
    if level > 0:
        k = k[k % 2 != 0]
    t = k * h
    s = 0.5 * math.pi * np.sinh(t)
    e = np.exp(-2.0 * np.abs(s))
    # 1 - |u| = 2 e / (1 + e), computed without cancellation
    small = 2.0 * e / (1.0 + e)
    large = 2.0 - small
    one_plus_u = np.where(s < 0, small, large)
    one_minus_u = np.where(s < 0, large, small)
    weight = 0.5 * math.pi * np.cosh(t) * 4.0 * e / (1.0 + e) ** 2
    keep = (small > 0) & (weight > 0)
    return one_plus_u[keep], one_minus_u[keep], weight[keep], h


def _level_sum(f, a, b, level, complements):
    one_plus_u, one_minus_u, weight, h = _nodes(level)
    half = 0.5 * (b - a)
    da = half * one_plus_u
    db = half * one_minus_u
    x = np.where(one_plus_u < one_minus_u, a + da, b - db)
    if complements:
        keep = (da > 0) & (db > 0)
        x, da, db, weight = x[keep], da[keep], db[keep], weight[keep]
        values = np.asarray(f(x, da, db))
    else:
        keep = (x > a) & (x < b)
        x, weight = x[keep], weight[keep]
        values = np.asarray(f(x))
    if values.shape != x.shape:
        values = np.broadcast_to(values, x.shape)
    if not np.all(np.isfinite(values)):
        bad = x[~np.isfinite(values)]
        raise NumericalFailureError(
            "integrand returned non-finite values",
            interval=(a, b),
            first_bad_abscissa=float(bad[0]),
        )
    return half * np.sum(weight * values), x.size, h


def level_estimates(
    f: Callable, a: float, b: float, max_level: int = 8, *, complements: bool = False
) -> Iterator[tuple[float, int]]:
    """Yield ``(estimate, cumulative_evaluations)`` for levels 0..max_level."""
    if not a < b:
        raise InvalidArgumentError(f"need a < b, got a={a!r}, b={b!r}")
    partial = 0.0
    evaluations = 0
    for level in range(max_level + 1):
        total, count, h = _level_sum(f, a, b, level, complements)
        evaluations += count
        if level == 0:
            partial = total
            estimate = h * partial
        else:
            partial = partial + total
            estimate = h * partial
        yield estimate, evaluations


def integrate_finite(
    f: Callable,
    a: float,
    b: float,
    rel_tol: float = 1e-9,
    abs_tol: float = 0.0,
    *,
    complements: bool = False,
    budget: int = DEFAULT_BUDGET,
) -> QuadratureResult:
    """Integrate ``f`` over ``(a, b)`` by tanh-sinh level doubling.

    Parameters
    ----------
    f : callable
        Vectorised integrand; never evaluated at the endpoints.
    a, b : float
        Finite limits with ``a < b``.
    rel_tol, abs_tol : float
        Stop once the difference between consecutive levels is below
        ``max(abs_tol, rel_tol * |value|)``.
    complements : bool
        Call ``f(x, x - a, b - x)`` with cancellation-free distances.
    budget : int
        Maximum number of integrand evaluations.

    Raises
    ------
    NumericalFailureError
        If the budget is exhausted; ``details`` carries the best estimate.
    """
    if not (math.isfinite(a) and math.isfinite(b)):
        raise InvalidArgumentError("limits must be finite; use integrate_semiinfinite")
    if not a < b:
        raise InvalidArgumentError(f"need a < b, got a={a!r}, b={b!r}")
    previous = None
    error = math.inf
    estimate = 0.0
    evaluations = 0
    level = 0
    for level, (estimate, evaluations) in enumerate(
        level_estimates(f, a, b, max_level=40, complements=complements)
    ):
        if previous is not None:
            error = abs(estimate - previous)
            if level >= _MIN_LEVEL and error <= max(abs_tol, rel_tol * abs(estimate)):
                return QuadratureResult(estimate, error, evaluations, level)
        previous = estimate
        # the next level costs about as much as everything so far
        if 2 * evaluations > budget:
            break
    raise NumericalFailureError(
        "tanh-sinh budget exhausted",
        best_estimate=estimate,
        error_estimate=error,
        evaluations=evaluations,
        interval=(a, b),
    )


def integrate_semiinfinite(
    f: Callable,
    a: float,
    envelope: Callable[[float], float],
    rel_tol: float = 1e-9,
    abs_tol: float = 0.0,
    *,
    truncation: float = 1e-14,
    scale: float = 1.0,
    budget: int = DEFAULT_BUDGET,
) -> QuadratureResult:
    """Integrate ``f`` over ``(a, inf)`` by truncation at a decaying envelope.

    ``envelope(t)`` must bound ``|f(t)|`` and decrease monotonically beyond
    ``a``. The upper limit is doubled (starting at ``a + scale``) until the
    envelope falls below ``truncation * |partial integral|``.

    Raises
    ------
    InvalidArgumentError
        If the envelope grows between successive probe points.
    """
    if not math.isfinite(a):
        raise InvalidArgumentError("lower limit must be finite")
    if scale <= 0:
        raise InvalidArgumentError("scale must be positive")
    length = scale
    last_env = envelope(a + length)
    for _ in range(200):
        upper = a + length
        env = envelope(upper)
        if env > last_env:
            raise InvalidArgumentError(
                f"envelope is not decaying: envelope({upper!r}) = {env!r} "
                f"exceeds the previous probe value {last_env!r}"
            )
        last_env = env
        result = integrate_finite(f, a, upper, rel_tol, abs_tol * 0.5, budget=budget)
        if env <= truncation * max(abs(result.value), abs_tol):
            return result
        length *= 2.0
    raise NumericalFailureError("no truncation point found", last_upper=a + length)
