"""Pointwise recovery of a(x0) from scattering data with Gaussian probes.

Born approximation: for u0 = eps * phi_{sigma,x0},

    Re i<S_a(u0) - u0, u0>  ~  eps^{p+2} int_0^inf int a |e^{it Delta} phi|^{p+2} dx dt,

and the double integral concentrates at x0:

    p > 2:  ~ sigma^3 lambda(p) a(x0)
    p = 2:  ~ c2 sigma^3 |log sigma| a(x0),   c2 = sqrt(pi)

c2 follows from K^(xi) ~ 2^{-1/2} log(1/|xi|) and the unitary inversion
formula, which contributes the factor sqrt(2 pi).  The leading term is real,
so estimates use the real part and keep the imaginary part as a diagnostic.

For the modified map the same p = 2 kernel appears with weight -i eps^3; the
cubic term (1/2i) log(1 + 1/(2 eps)) <|w|^2 w, phi^> is removed using the
computed profiles, and the a-independent quartic term cancels in a - b.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DistanceNotSmall, NormalizationUnderflow, SigmaTooLarge
from .kernels import lambda_p
from .nls_solver import Coefficient
from .scattering_maps import (ModifiedScatteringMap, ScatteringMap, frequency_pairing,
                              pairing_with_probe)
from .spectral_core import Grid, ProbeSpec, fourier, gaussian_probe, make_grid

C_LOG = math.sqrt(math.pi)
SIGMA_LOG_MAX = 0.5
POINTS_PER_SIGMA = 4.0


@dataclass(frozen=True)
class PointEstimate:
    value: float
    imag_residue: float
    x0: float
    sigma: float
    eps: float
    normalization: float
    horizon: float
    converged: bool


@dataclass
class RecoveryReport:
    x0_lattice: np.ndarray
    estimates: np.ndarray
    sigma: float
    eps: float
    mode: str
    truth: np.ndarray | None = None
    sup_error: float | None = None
    imag_residues: np.ndarray | None = None
    normalization: str = ""
    points: list = field(default_factory=list)

    @property
    def errors(self) -> np.ndarray | None:
        return None if self.truth is None else np.abs(self.estimates - self.truth)


# ---------------------------------------------------------------------------
# helpers


def probe_grid(base: Grid, sigma: float, points_per_sigma: float = POINTS_PER_SIGMA) -> Grid:
    """Grid of the same length as ``base`` with dx <= sigma / points_per_sigma."""
    if base.dx <= sigma / points_per_sigma:
        return base
    n = 1 << math.ceil(math.log2(base.length * points_per_sigma / sigma))
    return make_grid(n, base.length)


def default_eps(sigma: float) -> float:
    """eps = sigma keeps ||eps phi||_2 ~ sigma^{3/2} well inside the small-data ball."""
    return sigma


def _probe(grid: Grid, sigma: float, x0: float):
    spec = ProbeSpec(sigma, x0, 1.0)
    return spec, gaussian_probe(grid, spec)


def _born_pairing(map_a: ScatteringMap, sigma: float, x0: float, eps: float, grid: Grid | None):
    """i <S_a(eps phi) - eps phi, eps phi> and the record it came from."""
    base = grid or map_a.spec.coeff.grid
    g = probe_grid(base, sigma)
    spec1, phi1 = _probe(g, sigma, x0)
    u0 = phi1.scaled(eps)
    rec = map_a.record(u0, spec1.with_amplitude(eps))
    val = 1j * eps * pairing_with_probe(rec, phi1)
    return val, rec


def _estimate(val: complex, norm: float, x0, sigma, eps, rec) -> PointEstimate:
    if abs(norm) < 1e-300:
        raise NormalizationUnderflow(f"normalization {norm:.3e} underflows")
    return PointEstimate(val.real / norm, val.imag / norm, x0, sigma, eps, norm,
                         rec.horizon, rec.converged)


# ---------------------------------------------------------------------------
# point recovery


def recover_point_holder(map_a: ScatteringMap, sigma: float, x0: float, p: float,
                         eps: float | None = None, grid: Grid | None = None,
                         full_output: bool = False):
    """Re i<S_a(eps phi) - eps phi, eps phi> / (eps^{p+2} sigma^3 lambda(p)),  p > 2."""
    eps = default_eps(sigma) if eps is None else eps
    norm = eps ** (p + 2.0) * sigma**3 * lambda_p(p)
    val, rec = _born_pairing(map_a, sigma, x0, eps, grid)
    est = _estimate(val, norm, x0, sigma, eps, rec)
    return est if full_output else est.value


def recover_point_log(map_a: ScatteringMap, sigma: float, x0: float, eps: float | None = None,
                      grid: Grid | None = None, full_output: bool = False):
    """Re i<S_a(eps phi) - eps phi, eps phi> / (eps^4 c2 sigma^3 |log sigma|),  p = 2."""
    if sigma >= SIGMA_LOG_MAX:
        raise SigmaTooLarge(f"sigma = {sigma} >= {SIGMA_LOG_MAX}: log normalization unreliable")
    eps = default_eps(sigma) if eps is None else eps
    norm = eps**4 * C_LOG * sigma**3 * abs(math.log(sigma))
    val, rec = _born_pairing(map_a, sigma, x0, eps, grid)
    est = _estimate(val, norm, x0, sigma, eps, rec)
    return est if full_output else est.value


def modified_eps(sigma: float) -> float:
    return sigma**5.5


def cubic_difference(w_ref: np.ndarray, dw: np.ndarray) -> np.ndarray:
    """|w_ref + dw|^2 (w_ref + dw) - |w_ref|^2 w_ref without cancellation."""
    dmod = 2.0 * (w_ref.real * dw.real + w_ref.imag * dw.imag) + dw.real**2 + dw.imag**2
    return dmod * (w_ref + dw) + (w_ref.real**2 + w_ref.imag**2) * dw


def recover_difference_modified(map_a: ModifiedScatteringMap, map_b: ModifiedScatteringMap,
                                sigma: float, x0: float, eps: float | None = None,
                                grid: Grid | None = None, full_output: bool = False):
    """(a - b)(x0) from  <w_a - w_b, phi^> = (1/2i) L <|w_a|^2 w_a - |w_b|^2 w_b, phi^>
                                            - i eps^3 c2 sigma^3 |log sigma| (a - b)(x0) + ...

    with L = log(1 + 1/(2 eps)); w are the profiles of eps * phi_{sigma,x0}.
    """
    if sigma >= SIGMA_LOG_MAX:
        raise SigmaTooLarge(f"sigma = {sigma} >= {SIGMA_LOG_MAX}: log normalization unreliable")
    eps = modified_eps(sigma) if eps is None else eps
    base = grid or map_a.coeff.grid
    g = probe_grid(base, sigma)
    spec1, phi1 = _probe(g, sigma, x0)
    rec = map_a.difference(map_b, phi1.scaled(eps), spec1.with_amplitude(eps))
    pair = frequency_pairing(rec.difference, phi1)
    cubic = frequency_pairing(cubic_difference(rec.w_plus, rec.difference), phi1)
    corr = math.log1p(1.0 / (2.0 * eps)) / 2j * cubic
    val = 1j * (pair - corr)
    norm = eps**3 * C_LOG * sigma**3 * abs(math.log(sigma))
    est = _estimate(val, norm, x0, sigma, eps, rec)
    return est if full_output else est.value


# ---------------------------------------------------------------------------
# sigma selection


def choose_sigma(distance: float, norm_budget: float = 0.0, mode: str = "holder",
                 p: float = 3.0, s: float | None = None) -> float:
    """sigma ~ [distance / (1 + budget)]^gamma with gamma = 1/(2+s), 1/2 or 2/29."""
    if distance >= 0.5:
        raise DistanceNotSmall(f"distance {distance} is not small")
    if not distance > 0:
        raise ValueError("distance must be positive")
    if mode == "holder":
        if not 2.0 < p <= 4.0:
            raise ValueError("holder mode needs 2 < p <= 4")
        s = 0.5 * (1.0 - 2.0 / p) if s is None else s
        gamma = 1.0 / (2.0 + s)
    elif mode == "log_endpoint":
        gamma = 0.5
    elif mode == "modified":
        gamma = 2.0 / 29.0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return (distance / (1.0 + norm_budget)) ** gamma


# ---------------------------------------------------------------------------
# lattice sweeps


def worker_count(default: int = 1) -> int:
    try:
        return max(1, int(os.environ.get("NLS_LAB_THREADS", default)))
    except ValueError:
        return default


def _check_lattice(grid: Grid, x0s):
    margin = 0.5 * grid.length - grid.length / 10.0
    bad = [x for x in x0s if abs(x) > margin]
    if bad:
        raise ValueError(f"lattice points {bad} lie within L/10 of the boundary")


def recover_lattice(x0s, sigma: float, mode: str, map_a, map_b=None, p: float = 2.0,
                    eps: float | None = None, truth: Coefficient | None = None,
                    truth_b: Coefficient | None = None, grid: Grid | None = None,
                    workers: int | None = None) -> RecoveryReport:
    """Recover on every lattice point; jobs run in a pool, results keep lattice order."""
    x0s = np.asarray(x0s, dtype=float)
    if mode == "holder":
        job = lambda x: recover_point_holder(map_a, sigma, x, p, eps, grid, True)
        norm_tag = "eps^(p+2) sigma^3 lambda(p)"
        base = grid or map_a.spec.coeff.grid
    elif mode == "log_endpoint":
        job = lambda x: recover_point_log(map_a, sigma, x, eps, grid, True)
        norm_tag = "eps^4 sqrt(pi) sigma^3 |log sigma|"
        base = grid or map_a.spec.coeff.grid
    elif mode == "modified_difference":
        job = lambda x: recover_difference_modified(map_a, map_b, sigma, x, eps, grid, True)
        norm_tag = "eps^3 sqrt(pi) sigma^3 |log sigma|"
        base = grid or map_a.coeff.grid
    else:
        raise ValueError(f"unknown mode {mode!r}")
    _check_lattice(base, x0s)
    workers = worker_count() if workers is None else workers
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            pts = list(ex.map(job, x0s))
    else:
        pts = [job(x) for x in x0s]
    est = np.array([pt.value for pt in pts])
    imag = np.array([pt.imag_residue for pt in pts])
    tv = None
    sup = None
    if truth is not None:
        tv = truth(x0s)
        if truth_b is not None:
            tv = tv - truth_b(x0s)
        sup = float(np.max(np.abs(est - tv)))
    used_eps = pts[0].eps if pts else (eps or 0.0)
    return RecoveryReport(x0s, est, sigma, used_eps, mode, tv, sup, imag, norm_tag, pts)
