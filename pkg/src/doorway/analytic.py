"""Large-N closed forms for the averaged survival probability.

All times are dimensionless (``tau = D t``) and all energies are in units of
the mean level spacing D. The coupling strength enters only through
``lam = v / D``; the spreading width is ``Gamma / D = 2 pi lam^2``.

Production formulas are one-dimensional integrals evaluated by tanh-sinh
quadrature. The ``*_reference`` functions integrate the underlying
two-dimensional representations directly and serve as independent oracles.
Every public survival function returns a float by default; pass
``full_output=True`` to get a :class:`QuadratureResult` with an error bound.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erfcx

from .ensembles import Background
from .errors import InvalidArgumentError, NumericalFailureError
from .quadrature import QuadratureResult, integrate_finite

__all__ = [
    "spreading_width",
    "fgr",
    "db_saturation",
    "form_factor_b2",
    "gru_approx",
    "ipr_poisson",
    "ipr_gue",
    "ipr_gue_integral_check",
    "ipr_goe_add",
    "ipr_goe",
    "survival_poisson",
    "survival_poisson_reference",
    "survival_gue",
    "survival_gue_reference",
    "survival_goe_add",
    "survival_goe",
    "survival",
    "ipr",
    "ldos_lorentzian",
    "asymptotic_ipr",
    "FORMULA_NOTES",
]

_SQRT_PI = math.sqrt(math.pi)
_PI2 = math.pi * math.pi

# Structured notes surfaced by the CLI whenever the affected formulas run.
FORMULA_NOTES = {
    "poisson_hyperbolic_argument": (
        "survival_poisson uses the hyperbolic argument pi*lam^2*tau/sqrt(1-x), obtained by "
        "integrating the Gaussian s-integral of the two-dimensional form; the variant "
        "argument pi*lam^2*tau/(1-x) makes the x-integral diverge"
    ),
    "small_lambda_asymptote": (
        "the closed-form IPRs have small-lambda slope -pi^1.5/2, half the often-quoted "
        "coefficient; the closed forms are used as ground truth"
    ),
    "gue_reference_sign": (
        "survival_gue_reference uses 1 - (1/pi) * (double integral); a plus sign there "
        "would yield 2 - P"
    ),
    "goe_cooperon_normalisation": (
        "survival_goe_add and ipr_goe_add carry half the often-quoted prefactor; the halved "
        "value agrees with the kernel formula, an independent Fourier evaluation and "
        "Monte Carlo"
    ),
}


# --- helpers -------------------------------------------------------------------


def _check_lam(lam, *, positive=False):
    lam = float(lam)
    if not math.isfinite(lam) or lam < 0 or (positive and lam == 0):
        bound = "> 0" if positive else ">= 0"
        raise InvalidArgumentError(f"lam must be finite and {bound}, got {lam!r}")
    return lam


def _check_tau(tau):
    tau = float(tau)
    if not (math.isfinite(tau) and tau >= 0):
        raise InvalidArgumentError(f"tau must be finite and >= 0, got {tau!r}")
    return tau


def _finish(value, error, evaluations, full_output, clamp=True):
    if clamp:
        if not -1e-6 <= value <= 1 + 1e-6:
            raise NumericalFailureError(
                "survival value outside [0, 1]", value=value, error_estimate=error
            )
        value = min(max(value, 0.0), 1.0)
    if full_output:
        return QuadratureResult(float(value), float(error), int(evaluations))
    return value


def _exact(value, full_output):
    return QuadratureResult(value, 0.0, 0) if full_output else value


def _one_minus_sqrtpi_z_erfcx(z):
    """``1 - sqrt(pi) z exp(z^2) erfc(z)`` without cancellation at large z."""
    if z <= 8.0:
        return 1.0 - _SQRT_PI * z * float(erfcx(z))
    # asymptotic series sum_{n>=1} (-1)^(n+1) (2n-1)!! / (2 z^2)^n
    inv = 1.0 / (2.0 * z * z)
    term, total = 1.0, 0.0
    for n in range(1, 60):
        term *= -(2 * n - 1) * inv
        total -= term
        if abs(term) < 1e-18 * abs(total):
            break
    return total


# --- golden rule, Drude-Boltzmann and form-factor baseline -----------------------


def spreading_width(lam):
    """``Gamma / D = 2 pi lam^2``."""
    lam = _check_lam(lam)
    return 2.0 * math.pi * lam * lam


def fgr(lam, tau):
    """Golden-rule decay ``exp(-2 pi lam^2 tau)``."""
    lam, tau = _check_lam(lam), _check_tau(tau)
    return math.exp(-2.0 * math.pi * lam * lam * tau)


def db_saturation(lam):
    """Drude-Boltzmann saturation ``D/(pi Gamma) = 1/(2 pi^2 lam^2)``."""
    lam = _check_lam(lam, positive=True)
    return 1.0 / (2.0 * _PI2 * lam * lam)


def form_factor_b2(ensemble, t):
    """Two-level form factor ``b2(t)`` of the background ensemble.

    Zero for Poisson; ``1 - |t|`` on ``|t| <= 1`` for GUE; the standard
    logarithmic form for GOE. Accepts scalars or arrays.
    """
    kind = Background(ensemble)
    t = np.abs(np.asarray(t, dtype=float))
    if kind is Background.POISSON:
        out = np.zeros_like(t)
    elif kind is Background.GUE:
        out = np.where(t <= 1.0, 1.0 - t, 0.0)
    else:
        inner = 1.0 - 2.0 * t + t * np.log1p(2.0 * t)
        with np.errstate(divide="ignore", invalid="ignore"):
            outer = -1.0 + t * np.log((2.0 * t + 1.0) / (2.0 * t - 1.0))
        out = np.where(t <= 1.0, inner, outer)
    return float(out) if out.ndim == 0 else out


def gru_approx(lam, tau, ensemble):
    """Correlation-corrected Drude-Boltzmann estimate.

    ``exp(-2 pi lam^2 tau) + 1/(2 pi^2 lam^2)
    - int dt' exp(-2 pi lam^2 |tau - 2 pi t'|) b2(t')``.

    A qualitative baseline only: for weak coupling its saturation exceeds 1.
    """
    lam, tau = _check_lam(lam, positive=True), _check_tau(tau)
    kind = Background(ensemble)
    a = 2.0 * math.pi * lam * lam
    base = math.exp(-a * tau) + 1.0 / (2.0 * _PI2 * lam * lam)
    if kind is Background.POISSON:
        return base
    centre = tau / (2.0 * math.pi)
    if kind is Background.GUE:
        lo, hi = -1.0, 1.0
    else:
        # exp(-a |tau - 2 pi t'|) < 1e-12 beyond this distance from the kink
        reach = math.log(1e12) / (2.0 * math.pi * a)
        lo, hi = min(-1.0, centre - reach), max(1.0, centre + reach)
    cuts = sorted({c for c in (lo, hi, -1.0, 0.0, 1.0, centre) if lo <= c <= hi})

    def f(t):
        return np.exp(-a * np.abs(tau - 2.0 * math.pi * t)) * form_factor_b2(kind, t)

    total = 0.0
    for left, right in zip(cuts[:-1], cuts[1:]):
        if right > left:
            total += integrate_finite(f, left, right, rel_tol=1e-11, abs_tol=1e-15).value
    return base - total


# --- inverse participation ratios ----------------------------------------------------


def ipr_poisson(lam):
    """Mean IPR for a Poisson background and complex coupling.

    ``1 - (pi^1.5 lam/2) exp((pi lam/2)^2) erfc(pi lam/2)``.
    """
    lam = _check_lam(lam)
    if lam == 0:
        return 1.0
    return _one_minus_sqrtpi_z_erfcx(0.5 * math.pi * lam)


def ipr_gue(lam):
    """Mean IPR for a GUE background and complex coupling.

    ``1 - pi^2 lam^2 - (pi^2 lam / (2 sqrt(pi))) (1 - 2 pi^2 lam^2)
    exp(pi^2 lam^2) erfc(pi lam)``; an asymptotic series takes over for
    ``pi lam > 8`` where the direct form cancels.
    """
    lam = _check_lam(lam)
    if lam == 0:
        return 1.0
    z = math.pi * lam
    if z <= 8.0:
        return 1.0 - z * z - 0.5 * _SQRT_PI * z * (1.0 - 2.0 * z * z) * float(erfcx(z))
    # sum_{n>=1} (a_{n+1} - a_n / 2) z^(-2n), a_n = (-1)^n (2n-1)!! / 2^n
    inv = 1.0 / (z * z)
    a_n = -0.5  # a_1
    total = 0.0
    power = inv
    for n in range(1, 60):
        a_next = -a_n * (2 * n + 1) / 2.0
        term = (a_next - 0.5 * a_n) * power
        total += term
        if abs(term) < 1e-18 * abs(total):
            break
        a_n = a_next
        power *= inv
    return total


def ipr_gue_integral_check(lam, *, rel_tol=1e-12):
    """The GUE IPR as the long-time limit of the survival integral.

    ``1 - (lam sqrt(pi)/2) int_0^1 dx/sqrt(x(1-x)) exp(-pi^2 lam^2 (2-x)/x)
    [cosh(a) + sqrt(1-x) sinh(a)]`` with ``a = 2 pi^2 lam^2 sqrt(1-x)/x``.
    """
    lam = _check_lam(lam, positive=True)
    c = _PI2 * lam * lam

    def f(x, _xa, om):
        r = np.sqrt(om)
        # (2 - x) -/+ 2r = (1 -/+ r)^2, the minus case written without cancellation
        ep = np.exp(-c * (x / (1.0 + r)) ** 2 / x)
        em = np.exp(-c * (1.0 + r) ** 2 / x)
        return (0.5 * (ep + em) + r * 0.5 * (ep - em)) / np.sqrt(x * om)

    res = integrate_finite(f, 0.0, 1.0, rel_tol=rel_tol, abs_tol=1e-15, complements=True)
    return 1.0 - 0.5 * lam * _SQRT_PI * res.value


def asymptotic_ipr(ensemble, lam):
    """Large-coupling asymptotes: ``2/(pi^2 lam^2)`` (Poisson), ``1/(pi^2 lam^2)`` (GUE)."""
    lam = _check_lam(lam, positive=True)
    kind = Background(ensemble)
    if kind is Background.POISSON:
        return 2.0 / (_PI2 * lam * lam)
    return 1.0 / (_PI2 * lam * lam)


# --- Poisson background ------------------------------------------------------------


def survival_poisson(lam, tau, *, rel_tol=1e-9, full_output=False):
    """Averaged survival probability for a Poisson background, complex coupling.

    ``1 + (lam/(2 sqrt(pi))) int_0^1 dx/sqrt(x) exp(-pi^2 lam^2 x/(4(1-x)))
    {(pi/sqrt(1-x)) [exp(-tau^2 lam^2/x) cosh(b) - 1]
    - (2 tau/x) exp(-tau^2 lam^2/x) sinh(b)}`` with
    ``b = pi lam^2 tau / sqrt(1-x)``.
    """
    lam, tau = _check_lam(lam), _check_tau(tau)
    if lam == 0 or tau == 0:
        return _exact(1.0, full_output)
    l2 = lam * lam

    def f(x, _xa, om):
        sq = np.sqrt(om)
        sx = np.sqrt(x)
        e0 = -_PI2 * l2 * x / (4.0 * om)
        # exponents of the cosh/sinh pieces, completed to perfect squares
        ep = np.exp(-l2 * (tau / sx - math.pi * sx / (2.0 * sq)) ** 2)
        em = np.exp(-l2 * (tau / sx + math.pi * sx / (2.0 * sq)) ** 2)
        ch = 0.5 * (ep + em)
        sh = 0.5 * (ep - em)
        return (math.pi / sq * (ch - np.exp(e0)) - 2.0 * tau / x * sh) / sx

    scale = lam / (2.0 * _SQRT_PI)
    res = integrate_finite(
        f, 0.0, 1.0, rel_tol=rel_tol, abs_tol=1e-3 * rel_tol / scale, complements=True
    )
    return _finish(1.0 + scale * res.value, scale * res.error_estimate, res.evaluations, full_output)


# Inner s-integrals of the two-dimensional forms all reduce to
#   int_0^inf u exp(-u^2) sin(omega u) du,
# evaluated by composite Gauss-Legendre on [0, 6] (exp(-36) < 1e-14).
# Frequencies beyond ~14.1 contribute less than 1e-20 and are skipped.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
_U_MAX = 6.0
_OMEGA_MAX = 2.0 * math.sqrt(50.0)


def _build_u_grid(panels=64):
    edges = np.linspace(0.0, _U_MAX, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    u = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return u, w * u * np.exp(-u * u)


_U_GRID, _U_WEIGHTS = _build_u_grid()


def gaussian_sine_moment(omega):
    """``int_0^inf u exp(-u^2) sin(omega u) du`` by direct quadrature (vectorised)."""
    omega = np.asarray(omega, dtype=float)
    keep = np.abs(omega) <= _OMEGA_MAX
    safe = np.where(keep, omega, 0.0)
    out = np.sin(safe[..., None] * _U_GRID) @ _U_WEIGHTS
    return np.where(keep, out, 0.0)


def _s_integral(components, tau, x):
    """``int_0^inf ds s (cos(tau s) - 1) exp(-x s^2) sum_j a_j sin(w_j s)``.

    ``components`` is a list of ``(a_j, w_j)`` arrays over the x nodes.
    """
    sx = np.sqrt(x)
    total = np.zeros_like(x)
    for amp, freq in components:
        parts = (
            0.5 * gaussian_sine_moment((freq + tau) / sx)
            + 0.5 * gaussian_sine_moment((freq - tau) / sx)
            - gaussian_sine_moment(freq / sx)
        )
        total = total + amp * parts
    return total / x


def survival_poisson_reference(lam, tau, *, rel_tol=1e-9, full_output=False):
    """Poisson survival probability from the untransformed double integral.

    ``1 + (1/pi) int ds s [cos(tau s) - 1] int_0^{1/(4 lam^2)} dx exp(-x s^2)
    sin(2 pi lam^2 x s / sqrt(1 - 4 x lam^2))``, with the x-integral by
    tanh-sinh and the s-integral by Gauss-Legendre on a truncated range.
    """
    lam, tau = _check_lam(lam), _check_tau(tau)
    if lam == 0 or tau == 0:
        return _exact(1.0, full_output)
    l2 = lam * lam
    upper = 1.0 / (4.0 * l2)

    def f(x, _xa, xb):
        root = np.sqrt(4.0 * l2 * xb)
        c = 2.0 * math.pi * l2 * x / root
        return _s_integral([(np.ones_like(x), c)], tau, x)

    res = integrate_finite(f, 0.0, upper, rel_tol=rel_tol, abs_tol=1e-12, complements=True)
    # the s-integrand is even, so the full line is twice the half line
    value = 1.0 + 2.0 * res.value / math.pi
    return _finish(value, 2.0 * res.error_estimate / math.pi, res.evaluations, full_output)


# --- GUE background -------------------------------------------------------------------


def survival_gue(lam, tau, *, rel_tol=1e-9, full_output=False):
    """Averaged survival probability for a GUE background, complex coupling.

    Two x-integrals over (0, 1) with ``W_+- = 1 +- sqrt(1-x)``, combined
    into one integrand; ``W_-`` is evaluated as ``x/(1 + sqrt(1-x))``.
    """
    lam, tau = _check_lam(lam), _check_tau(tau)
    if lam == 0 or tau == 0:
        return _exact(1.0, full_output)
    l2 = lam * lam

    def part(x, r, w, other):
        e0 = np.exp(-_PI2 * l2 * w * w / x)
        ep = np.exp(-l2 * (math.pi * w - tau) ** 2 / x)
        em = np.exp(-l2 * (math.pi * w + tau) ** 2 / x)
        ch = 0.5 * (ep + em)
        sh = 0.5 * (ep - em)
        return other * (math.pi * w * (e0 - ch) + tau * sh) / (x * np.sqrt(x) * r)

    def f(x, _xa, om):
        r = np.sqrt(om)
        w_plus = 1.0 + r
        w_minus = x / (1.0 + r)
        # x/2 - W_- = -x W_- / (2 W_+)
        other_plus = -x * w_minus / (2.0 * w_plus)
        other_minus = w_plus - 0.5 * x
        return part(x, r, w_plus, other_plus) - part(x, r, w_minus, other_minus)

    scale = lam / (2.0 * _SQRT_PI)
    res = integrate_finite(
        f, 0.0, 1.0, rel_tol=rel_tol, abs_tol=1e-3 * rel_tol / scale, complements=True
    )
    return _finish(1.0 + scale * res.value, scale * res.error_estimate, res.evaluations, full_output)


def survival_gue_reference(lam, tau, *, rel_tol=1e-9, full_output=False):
    """GUE survival probability from the untransformed double integral.

    ``1 - (1/pi) int ds s [cos(tau s) - 1] int_0^{1/(4 lam^2)} dx exp(-x s^2)
    {sin(pi s r) cos(pi s) - cos(pi s r) sin(pi s) (1 - 2 lam^2 x)/r}`` with
    ``r = sqrt(1 - 4 x lam^2)``. The overall minus sign is the one that
    reproduces P(0) = 1 with decay towards the IPR.
    """
    lam, tau = _check_lam(lam), _check_tau(tau)
    if lam == 0 or tau == 0:
        return _exact(1.0, full_output)
    l2 = lam * lam
    upper = 1.0 / (4.0 * l2)

    def f(x, _xa, xb):
        r = np.sqrt(4.0 * l2 * xb)
        kappa = (1.0 - 2.0 * l2 * x) / r
        # bracket = (1-kappa)/2 sin(pi(1+r)s) - (1+kappa)/2 sin(pi(1-r)s)
        comps = [
            (0.5 * (1.0 - kappa), math.pi * (1.0 + r)),
            (-0.5 * (1.0 + kappa), math.pi * (1.0 - r)),
        ]
        return _s_integral(comps, tau, x)

    res = integrate_finite(f, 0.0, upper, rel_tol=rel_tol, abs_tol=1e-12, complements=True)
    value = 1.0 - 2.0 * res.value / math.pi
    return _finish(value, 2.0 * res.error_estimate / math.pi, res.evaluations, full_output)


# --- GOE Cooperon correction -------------------------------------------------------


def _cooperon_h(w, x, l2):
    """``H`` of the Cooperon integrand.

    Expanding sinh and cosh gives
    ``H = 1/2 e_-(W/pi - 2 lam^2 (W-pi)^2/x) - 1/2 e_+(W/pi + 2 lam^2 (W+pi)^2/x)``
    with ``e_-+ = exp(-lam^2 (W -+ pi)^2 / x)``, which avoids the O(1/x)
    cancellation of the hyperbolic form.
    """
    dm = l2 * (w - math.pi) ** 2 / x
    dp = l2 * (w + math.pi) ** 2 / x
    return 0.5 * np.exp(-dm) * (w / math.pi - 2.0 * dm) - 0.5 * np.exp(-dp) * (
        w / math.pi + 2.0 * dp
    )


def _cooperon_inner(x, om, lam, tau, ipr_mode, rel_tol):
    """``int_1^inf dt/t G(pi t sqrt(1-x))`` in the variable ``v = log(pi t sqrt(1-x))``."""
    l2 = lam * lam
    u0 = math.pi * math.sqrt(om)
    # beyond this point every Gaussian factor is below exp(-45)
    umax = math.pi + tau + math.sqrt(45.0 * x) / lam + 1.0

    if ipr_mode:
        def g(v):
            return _cooperon_h(np.exp(v), x, l2)
    else:
        def g(v):
            u = np.exp(v)
            return (
                _cooperon_h(u + tau, x, l2)
                + _cooperon_h(u - tau, x, l2)
                - 2.0 * _cooperon_h(u, x, l2)
            )

    peaks = [math.pi] if ipr_mode else [math.pi - tau, math.pi, math.pi + tau, tau - math.pi]
    cuts = sorted({math.log(u0), math.log(umax)} | {math.log(p) for p in peaks if u0 < p < umax})
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b > a:
            total += integrate_finite(g, a, b, rel_tol=rel_tol, abs_tol=1e-16).value
    return total


def _cooperon_outer(lam, tau, ipr_mode, rel_tol):
    def f(x, _xa, om):
        inner = np.array(
            [_cooperon_inner(xi, oi, lam, tau, ipr_mode, 0.01 * rel_tol) for xi, oi in zip(x, om)]
        )
        return np.sqrt(math.pi * x) * lam / np.sqrt(om) * inner

    return integrate_finite(f, 0.0, 1.0, rel_tol=rel_tol, abs_tol=1e-13, complements=True)


def survival_goe_add(lam, tau, *, rel_tol=1e-8, full_output=False):
    """Cooperon correction to the survival probability for a GOE background.

    ``int_0^1 dx int_1^inf dt sqrt(pi x) lam / (16 t sqrt(1-x))
    [H(tau) + H(-tau) - 2 H(0)]`` evaluated at ``W = +-tau + pi t sqrt(1-x)``.
    The prefactor 1/16 is half the often-quoted 1/8.
    """
    lam, tau = _check_lam(lam), _check_tau(tau)
    if lam == 0 or tau == 0:
        return _exact(0.0, full_output)
    res = _cooperon_outer(lam, tau, False, rel_tol)
    value = res.value / 16.0
    return _finish(value, res.error_estimate / 16.0, res.evaluations, full_output, clamp=False)


def ipr_goe_add(lam, *, rel_tol=1e-8):
    """Cooperon correction to the mean IPR, the long-time limit of ``survival_goe_add``.

    ``-int_0^1 dx int_1^inf dt sqrt(pi x) lam H(0) / (8 t sqrt(1-x))``.
    """
    lam = _check_lam(lam)
    if lam == 0:
        return 0.0
    return -_cooperon_outer(lam, 0.0, True, rel_tol).value / 8.0


def survival_goe(lam, tau, *, rel_tol=1e-8, full_output=False):
    """GOE survival probability: GUE result plus the Cooperon correction."""
    gue = survival_gue(lam, tau, rel_tol=rel_tol, full_output=True)
    add = survival_goe_add(lam, tau, rel_tol=rel_tol, full_output=True)
    return _finish(
        gue.value + add.value,
        gue.error_estimate + add.error_estimate,
        gue.evaluations + add.evaluations,
        full_output,
    )


def ipr_goe(lam, *, rel_tol=1e-8):
    """Mean IPR for a GOE background and complex coupling."""
    return ipr_gue(lam) + ipr_goe_add(lam, rel_tol=rel_tol)


# --- dispatch and LDOS ------------------------------------------------------------------


def survival(ensemble, lam, tau, *, rel_tol=None, full_output=False):
    """Dispatch to the survival formula for ``ensemble``."""
    kind = Background(ensemble)
    func = {
        Background.POISSON: survival_poisson,
        Background.GUE: survival_gue,
        Background.GOE: survival_goe,
    }[kind]
    if rel_tol is None:
        return func(lam, tau, full_output=full_output)
    return func(lam, tau, rel_tol=rel_tol, full_output=full_output)


def ipr(ensemble, lam):
    """Dispatch to the mean-IPR formula for ``ensemble``."""
    kind = Background(ensemble)
    return {Background.POISSON: ipr_poisson, Background.GUE: ipr_gue, Background.GOE: ipr_goe}[
        kind
    ](lam)


def ldos_lorentzian(lam, e_over_D):
    """Lorentzian local density of states in units of 1/D, half-width ``pi lam^2``."""
    lam = _check_lam(lam, positive=True)
    g = math.pi * lam * lam
    e = np.asarray(e_over_D, dtype=float)
    out = (g / math.pi) / (e * e + g * g)
    return float(out) if out.ndim == 0 else out
