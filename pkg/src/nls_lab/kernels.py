"""Approximate-identity kernels and the quadratures behind the recovery formulas.

All integrals here use the explicit modulus of a freely evolved Gaussian,

    |e^{it Delta} phi_{sigma,x0}(x)|^2 = (1 + t^2/sigma^4)^{-1/2}
                                         * exp(-(x-x0)^2 / (2 sigma^2 (1 + t^2/sigma^4))),

so no PDE solve is involved.  Infinite time integrals are mapped to finite
intervals (``t = sigma^2 tan(theta)`` or ``t = sinh(u)``), which leaves smooth
integrands for the adaptive rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import _accel
from .errors import DivergentAtZero, PoleAtTwo, QuadratureBudgetExceeded
from .nls_solver import Coefficient
from .spectral_core import ProbeSpec

EPSABS = 1e-10
BUDGET = 1_000_000
SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class KernelEval:
    value: float
    abs_error_estimate: float
    method: str  # closed_form | adaptive_quadrature | series
    residual: float | None = None

    def __post_init__(self):
        if not self.abs_error_estimate >= 0:
            raise ValueError("error estimate must be non-negative")


# ---------------------------------------------------------------------------
# lambda(p)


def lambda_p(p: float) -> float:
    """Constant in  int_0^inf int |e^{it Delta} phi_{sigma,x0}|^{p+2} dx dt ~ sigma^3 lambda(p) a(x0).

    Doing the x-integral and then the t-integral (a Beta integral) gives

        lambda(p) = pi * (p+2)^{-1/2} * Gamma(p/4 - 1/2) / Gamma(p/4).

    ``math.gamma`` is a Lanczos approximation with relative error near 1e-15.
    """
    p = float(p)
    if p <= 2.0:
        raise PoleAtTwo(f"lambda(p) has a pole at p = 2; got p = {p}")
    if p > 4.0:
        raise ValueError(f"lambda(p) is only used for 2 < p <= 4; got p = {p}")
    return math.pi / math.sqrt(p + 2.0) * math.gamma(0.25 * p - 0.5) / math.gamma(0.25 * p)


def lambda_p_quadrature(p: float) -> KernelEval:
    """Brute-force 2D quadrature of the defining integral for sigma = 1.

    int_0^inf int_R (1+t^2)^{-(p+2)/4} exp(-(p+2) x^2 / (4 (1+t^2))) dx dt,
    over the x half-line (doubled) and t in [0, inf) with no closed-form help.
    """
    q = p + 2.0

    def inner(t):
        s = 1.0 + t * t
        width = math.sqrt(s)
        xmax = 12.0 * width
        val, err = integrate.quad(lambda x: math.exp(-q * x * x / (4.0 * s)), 0.0, xmax,
                                  epsabs=1e-14, epsrel=1e-13, limit=200)
        return 2.0 * s ** (-0.25 * q) * val

    val, err = integrate.quad(inner, 0.0, np.inf, epsabs=1e-12, epsrel=1e-11, limit=500)
    return KernelEval(val, err, "adaptive_quadrature")


# ---------------------------------------------------------------------------
# K and its Fourier transform


def _quad_refined(f, a, b, points=None):
    """Adaptive quad plus a second pass on split halves; error covers both."""
    v1, e1 = integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-12, limit=400, points=points)
    mid = 0.5 * (a + b)
    va, ea = integrate.quad(f, a, mid, epsabs=1e-14, epsrel=1e-13, limit=400)
    vb, eb = integrate.quad(f, mid, b, epsabs=1e-14, epsrel=1e-13, limit=400)
    v2 = va + vb
    return v2, max(e1, ea + eb, abs(v1 - v2))


def kernel_K(x: float) -> KernelEval:
    """K(x) = int_0^inf (1+t^2)^{-1} exp(-x^2/(1+t^2)) dt, computed as
    int_0^{pi/2} exp(-x^2 cos^2 theta) d theta after t = tan(theta)."""
    x2 = float(x) ** 2
    val, err = _quad_refined(lambda th: math.exp(-x2 * math.cos(th) ** 2), 0.0, 0.5 * math.pi)
    return KernelEval(val, err, "adaptive_quadrature")


def kernel_K_hat(xi: float) -> KernelEval:
    """K^(xi) = 2^{-1/2} int_0^inf (1+t^2)^{-1/2} exp(-xi^2 (1+t^2)/4) dt.

    With t = sinh(u) the integrand becomes exp(-xi^2 cosh(u)^2 / 4); it is
    cut where the exponent passes 740.  For |xi| <= 1 the residual
    K^(xi) - 2^{-1/2} log(1/|xi|) is attached.
    """
    xi = float(xi)
    if xi == 0.0:
        raise DivergentAtZero("K^ diverges logarithmically at xi = 0")
    c = 0.25 * xi * xi
    umax = math.acosh(max(1.0, math.sqrt(740.0 / c)))
    val, err = _quad_refined(lambda u: math.exp(-c * math.cosh(u) ** 2), 0.0, umax)
    val /= SQRT2
    err /= SQRT2
    resid = val - math.log(1.0 / abs(xi)) / SQRT2 if abs(xi) <= 1.0 else None
    return KernelEval(val, err, "adaptive_quadrature", resid)


def log_residual_sup(xi_min: float, xi_max: float = 1.0, per_decade: int = 16) -> float:
    """sup |K^(xi) - 2^{-1/2} log(1/xi)| over a log-spaced lattice in [xi_min, xi_max]."""
    n = max(2, int(round(per_decade * math.log10(xi_max / xi_min))) + 1)
    xis = np.geomspace(xi_min, xi_max, n)
    return max(abs(kernel_K_hat(x).residual) for x in xis)


# ---------------------------------------------------------------------------
# Born functional


def _born_lattice(coeff: Coefficient, sigma: float):
    """Quadrature nodes and weights a(x_j) dx for the x-integral.

    Uses the coefficient's own grid samples when that grid resolves the
    probe, otherwise samples the analytic generator on a refined lattice with
    the same origin.  Nodes outside the support of a are dropped.
    """
    grid = coeff.grid
    widths = [t.width for t in coeff.terms] or [sigma]
    h = min(sigma / 4.0, min(widths) / 8.0)
    xs = grid.xs
    if grid.dx <= h:
        vals = coeff.samples
        dx = grid.dx
    else:
        m = int(math.ceil(grid.dx / h))
        dx = grid.dx / m
        lo, hi = coeff.extent
        lo = max(lo, xs[0])
        hi = min(hi, xs[0] + grid.length)
        j0 = math.floor((lo - xs[0]) / dx)
        j1 = math.ceil((hi - xs[0]) / dx)
        xs = xs[0] + dx * np.arange(j0, j1 + 1)
        vals = coeff(xs)
    keep = vals != 0.0
    return np.ascontiguousarray(xs[keep]), np.ascontiguousarray(vals[keep] * dx)


def born_functional(coeff: Coefficient, probe: ProbeSpec, p: float, t_max: float | None = None,
                    full_output: bool = False, budget: int = BUDGET):
    """int_0^{t_max} int a(x) |e^{it Delta} phi_{sigma,x0}(x)|^{p+2} dx dt for the unit-amplitude probe.

    With t = sigma^2 tan(theta) this equals

        sigma^2 int_0^{theta_max} cos(theta)^{(p-2)/2}
                 sum_j a_j exp(-(p+2)(x_j-x0)^2 cos(theta)^2 / (4 sigma^2)) dx d theta,

    theta_max = arctan(t_max / sigma^2) (pi/2 for the full half-line).  The
    x-sum is the trapezoid rule on a's samples.  The probe's amplitude and
    velocity are ignored (the modulus of a boosted Gaussian is a translate).
    """
    if coeff.is_zero:
        return KernelEval(0.0, 0.0, "closed_form") if full_output else 0.0
    sigma = probe.sigma
    x0 = probe.x0
    xs, w = _born_lattice(coeff, sigma)
    q = (p + 2.0) / (4.0 * sigma * sigma)
    expo = 0.5 * (p - 2.0)
    theta_max = 0.5 * math.pi if t_max is None else math.atan(t_max / sigma**2)
    gsum = _accel.gaussian_moment_sum
    calls = [0]

    def f(th):
        calls[0] += 1
        c = math.cos(th)
        weight = 1.0 if expo == 0.0 else c**expo
        return weight * gsum(xs, w, x0, q * c * c)

    scale = max(abs(coeff.norms["linf"]), 1e-300) * sigma
    val, err, info = integrate.quad(f, 0.0, theta_max, epsabs=EPSABS * 1e-4 * scale,
                                    epsrel=1e-11, limit=2000, full_output=True)[:3]
    if calls[0] > budget:
        raise QuadratureBudgetExceeded(f"born_functional used {calls[0]} evaluations")
    val *= sigma * sigma
    err *= sigma * sigma
    return KernelEval(val, err, "adaptive_quadrature") if full_output else val


# ---------------------------------------------------------------------------
# Q_epsilon


def q_epsilon(probe: ProbeSpec, eps: float, method: str = "reduced", full_output: bool = False,
              cutoff: float = 12.0, budget: int = BUDGET):
    """Quartic oscillatory integral of the modified-map expansion for a Gaussian probe.

        Q = int_eps^inf (1/(2 i t)) iiint [e^{-i eta beta/(2t)} - 1]
                phi(z-eta) phi(z-beta) conj(phi)(z) conj(phi)(z-eta-beta) dz d eta d beta dt

    The z-integral of four Gaussians of width s is sqrt(pi) s exp(-(eta^2+beta^2)/(4 s^2))
    times amplitude^4.  In units eta = s a, beta = s b, t = s^2 tau this leaves

        Q = sqrt(pi) s^3 A^4 / (2i) int_{eps/s^2}^inf dtau/tau iint [e^{-i a b/(2 tau)} - 1]
                e^{-(a^2+b^2)/4} da db.

    The sine part is odd in a and integrates to zero, so Q is purely imaginary
    and only cos(ab/(2 tau)) - 1 over the quarter plane (times 4) is needed.
    tau in [tau0, inf) is mapped to v in (0, 1] by tau = tau0/v.

    ``method="nested"`` runs the three remaining integrals adaptively, with an
    oscillation-weighted rule for the innermost b-integral.  It is expensive
    (around 1e7 integrand calls) and raises QuadratureBudgetExceeded past
    ``budget``.  ``method="reduced"`` (default) also does the b-integral in
    closed form, sqrt(pi) (exp(-w^2) - 1) with w = a/(2 tau), and integrates
    the smooth remainder over (a, y) with v = exp(-y).
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    s = probe.sigma
    tau0 = eps / (s * s)
    calls = [0]

    if method == "reduced":
        # v = exp(-y) turns dv/v into dy and spreads the transition at v ~ tau0
        def f2(a, y):
            calls[0] += 1
            w = a * math.exp(-y) / (2.0 * tau0)
            return math.sqrt(math.pi) * math.expm1(-w * w) * math.exp(-0.25 * a * a)

        ymax = max(0.0, math.log(cutoff / (2.0 * tau0))) + 25.0
        opts = {"epsabs": 1e-13, "epsrel": 1e-11, "limit": 400}

        def inner_opts(y):
            # w = 1 at a = 2 tau0 e^y; below it the integrand switches on
            knee = 2.0 * tau0 * math.exp(y)
            pts = [m * knee for m in (1.0, 3.0, 8.0) if m * knee < cutoff]
            return dict(opts, points=pts) if pts else opts

        val, err = integrate.nquad(f2, [(0.0, cutoff), (0.0, ymax)], opts=[inner_opts, opts])
    elif method == "nested":
        def gauss(b):
            calls[0] += 1
            return math.exp(-0.25 * b * b)

        g0 = integrate.quad(gauss, 0.0, cutoff, epsabs=1e-14)[0]

        def inner(a, v):
            if calls[0] > budget:
                raise QuadratureBudgetExceeded(f"q_epsilon exceeded {budget} evaluations")
            w = a * v / (2.0 * tau0)
            if w * cutoff < 30.0:
                def f(b):
                    calls[0] += 1
                    return -2.0 * math.sin(0.5 * w * b) ** 2 * math.exp(-0.25 * b * b)
                return integrate.quad(f, 0.0, cutoff, epsabs=1e-13, epsrel=1e-9, limit=200)[0]
            return integrate.quad(gauss, 0.0, cutoff, weight="cos", wvar=w, epsabs=1e-13,
                                  epsrel=1e-9, limit=200)[0] - g0

        def mid(v):
            return integrate.quad(lambda a: inner(a, v) * math.exp(-0.25 * a * a), 0.0, cutoff,
                                  epsabs=1e-12, epsrel=1e-8, limit=200)[0] / v

        val, err = integrate.quad(mid, 0.0, 1.0, epsabs=1e-11, epsrel=1e-7, limit=200)
    else:
        raise ValueError(f"unknown method {method!r}")
    if calls[0] > budget:
        raise QuadratureBudgetExceeded(f"q_epsilon used {calls[0]} evaluations")
    pref = 2.0 * math.sqrt(math.pi) * s**3 * probe.amplitude**4  # (1/2) * 4 quadrants
    value = -1j * pref * val
    if full_output:
        return value, pref * err, calls[0]
    return value
