"""Numerical scattering maps as large-time limits of the split-step solver.

``S_a(u0) = lim_T e^{-iT Delta} u(T)`` is approximated on a doubling horizon
schedule T0/2, T0, 2 T0, ...; the L2 gap between consecutive horizons is the
convergence diagnostic.  The solver carries (free reference, increment) pairs,
so the map increment ``S_a(u0) - u0`` keeps full relative precision however
small it is, and the domain is doubled (zero padded) whenever the dispersed
packet would reach the wrap point.

The modified map works on the frequency side,

    w(t) = exp(i Phi(t)) F e^{-it Delta} u(t),
    Phi(k, t) = int_0^t |F e^{-is Delta} u(s)|^2(k) ds / (2s + 1),

with Phi accumulated by the trapezoid rule on the time-step lattice.
|F e^{-is Delta} u(s)| = |F u(s)|, so the integrand comes straight from the
FFT the stepper already takes.  Phi and w are kept on the frequency lattice of
the input grid, which stays a sub-lattice after every domain doubling.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import EmptyProbeSet, GridMismatch, MassDrift, NoConvergence, NotSmallData
from .nls_solver import (DEFAULT_ETA, MASS_TOL, Coefficient, NonlinearitySpec, SplitStepper,
                         check_small_data, default_dt)
from .spectral_core import (Field, Grid, ProbeSpec, derivative, field_moments, fourier,
                            gaussian_probe, l2_norm, required_length, window_values)

TOL_SCATTER = 1e-6
T_MAX_FACTOR = 512
WRAP_FACTOR = 40.0


def default_t0(sigma: float) -> float:
    return 8.0 * max(1.0, sigma * sigma)


def effective_sigma(u: Field) -> float:
    """Width of |u|^2 read as a Gaussian: equals sigma for the probe phi_{sigma,x0}."""
    sx = field_moments(u)[1]
    return sx if sx > 0 else 1.0


def h11_norm(u: Field) -> float:
    """(||u||^2 + ||u'||^2 + ||x u||^2)^{1/2}, spectral derivative, x measured from 0."""
    du = derivative(u)
    xu = Field(u.grid, u.grid.xs * u.values)
    return math.sqrt(l2_norm(u) ** 2 + l2_norm(du) ** 2 + l2_norm(xu) ** 2)


def low_band(grid: Grid) -> np.ndarray:
    """Mask |k| <= k_max/2 on the grid's frequency lattice."""
    kmax = np.abs(grid.ks).max()
    return np.abs(grid.ks) <= 0.5 * kmax


# ---------------------------------------------------------------------------
# records


@dataclass
class ScatterRecord:
    """Output of one (or one pair of) scattering-map evaluations.

    ``increment`` is S_a(u0) - u0 for a map record and S_a(u0) - S_b(u0) for a
    difference record; it lives on the final (possibly extended) grid.
    """

    probe: ProbeSpec | None
    u0: Field
    increment: Field
    horizons: list
    converged: bool
    dt: float
    mass_drift: float = 0.0
    kind: str = "map"

    @property
    def horizon(self) -> float:
        return self.horizons[-1][0] if self.horizons else 0.0

    @property
    def gaps(self) -> list:
        return [g for _, g in self.horizons]

    @property
    def u_plus(self) -> Field:
        if self.kind != "map":
            raise ValueError("difference records carry no u_plus")
        base = window_values(self.u0.grid, self.u0.values, self.increment.grid)
        return Field(self.increment.grid, base + self.increment.values)

    def increment_on(self, grid: Grid) -> np.ndarray:
        return window_values(self.increment.grid, self.increment.values, grid)


@dataclass
class ModScatterRecord:
    """Output of the modified map (or a difference of two modified maps).

    Frequency arrays are on ``u0.grid.ks`` in FFT order.  ``w_plus`` is the
    profile at the last horizon; for difference records ``w_plus`` belongs to
    the reference coefficient and ``difference`` is w_a - w_b.
    """

    probe: ProbeSpec | None
    u0: Field
    w_plus: np.ndarray
    phase_history: list
    cauchy_gaps: list
    converged: bool
    dt: float
    profiles: list = field(default_factory=list)
    difference: np.ndarray | None = None
    difference_profiles: list = field(default_factory=list)

    @property
    def horizon(self) -> float:
        return self.cauchy_gaps[-1][0] if self.cauchy_gaps else 0.0


# ---------------------------------------------------------------------------
# horizon driver


def _targets(t0: float, t_max: float) -> list:
    out = [0.5 * t0]
    t = t0
    while t <= t_max * (1 + 1e-12):
        out.append(t)
        t *= 2.0
    return out


def _step_size(t0: float, dt_req: float) -> float:
    """Largest dt <= dt_req that puts T0/2 on the step lattice."""
    m = math.ceil(0.5 * t0 / dt_req - 1e-9)
    return 0.5 * t0 / m


@dataclass
class _Settings:
    tol: float
    t0: float
    t_max: float
    dt: float
    wrap_factor: float
    strict: bool


def _settings(u0: Field, tol, t0, t_max_factor, dt, wrap_factor, strict) -> _Settings:
    sig = effective_sigma(u0)
    t0 = default_t0(sig) if t0 is None else float(t0)
    dt = _step_size(t0, default_dt(sig) if dt is None else float(dt))
    return _Settings(float(tol), t0, t_max_factor * t0, dt, float(wrap_factor), strict)


def _ensure_length(stepper: SplitStepper, u0: Field, horizon: float, wrap_factor: float):
    need = required_length(u0, horizon, wrap_factor)
    while stepper.grid.length < need:
        stepper.extend(2)


def _drive(stepper, u0, st: _Settings, observe, gap, on_step=None):
    """Advance through the doubling schedule; returns (observations, horizons, converged)."""
    prev = None
    horizons = []
    obs_hist = []
    converged = False
    for target in _targets(st.t0, st.t_max):
        _ensure_length(stepper, u0, target, st.wrap_factor)
        n = int(round(target / st.dt)) - stepper.steps
        stepper.advance(n, on_step)
        obs = observe(stepper, target)
        obs_hist.append((target, obs))
        if prev is not None:
            g = gap(prev, obs)
            horizons.append((target, g))
            if g < st.tol:
                converged = True
                break
        prev = obs
    return obs_hist, horizons, converged


def _fail(kind: str, st: _Settings, horizons):
    last = horizons[-1][1] if horizons else float("nan")
    raise NoConvergence(f"{kind}: gap {last:.3e} still above {st.tol:.1e} at T = {st.t_max:g}")


# ---------------------------------------------------------------------------
# unmodified map


def _physical_obs(stepper: SplitStepper, horizon: float):
    """(grid, e^{-iT Delta} d(T)) for the difference row."""
    g = stepper.grid
    back = np.exp(1j * horizon * g.ks**2)
    return g, sfft.ifft(back * sfft.fft(stepper.state[1]))


def _l2_gap(prev, cur) -> float:
    gp, vp = prev
    gc, vc = cur
    vp = window_values(gp, vp, gc)
    d = vc - vp
    return float(np.sqrt(np.sum(d.real**2 + d.imag**2) * gc.dx))


def _pair_run(u0: Field, spec: NonlinearitySpec, reference: NonlinearitySpec | None,
              st: _Settings, kind: str, probe):
    stepper = SplitStepper(u0.grid, u0.values, spec.p, st.dt, spec.potential,
                           None if reference is None else reference.potential, pair=True)
    obs, horizons, converged = _drive(stepper, u0, st, _physical_obs, _l2_gap)
    if not converged and st.strict:
        _fail(kind, st, horizons)
    norm0 = l2_norm(u0)
    u_end = stepper.state[0] + stepper.state[1]
    norm_t = math.sqrt(float(np.sum(np.abs(u_end) ** 2)) * stepper.grid.dx)
    drift = abs(norm_t - norm0) / norm0 if norm0 > 0 else 0.0
    if drift > MASS_TOL:
        raise MassDrift(f"relative mass drift {drift:.3e} exceeds {MASS_TOL}")
    grid, inc = obs[-1][1]
    return ScatterRecord(probe, u0, Field(grid, inc), horizons, converged, st.dt, drift, kind)


def scattering_map(u0: Field, spec: NonlinearitySpec, tol_scatter: float = TOL_SCATTER,
                   t0: float | None = None, t_max_factor: float = T_MAX_FACTOR,
                   dt: float | None = None, wrap_factor: float = WRAP_FACTOR, strict: bool = True,
                   eta: float = DEFAULT_ETA, probe: ProbeSpec | None = None) -> ScatterRecord:
    """u_plus = e^{-iT Delta} u(T) at the first doubling horizon whose gap is below tol."""
    check_small_data(u0, eta)
    st = _settings(u0, tol_scatter, t0, t_max_factor, dt, wrap_factor, strict)
    if spec.is_free:
        return ScatterRecord(probe, u0, Field(u0.grid, np.zeros(u0.grid.n)), [(st.t0, 0.0)],
                             True, st.dt, 0.0)
    return _pair_run(u0, spec, None, st, "map", probe)


class ScatteringMap:
    """S_a for a fixed nonlinearity, with the horizon and step rules bound in."""

    def __init__(self, spec: NonlinearitySpec, tol_scatter: float = TOL_SCATTER,
                 t0: float | None = None, t_max_factor: float = T_MAX_FACTOR,
                 dt: float | None = None, wrap_factor: float = WRAP_FACTOR, strict: bool = True,
                 eta: float = DEFAULT_ETA):
        self.spec = spec
        self.opts = dict(tol_scatter=tol_scatter, t0=t0, t_max_factor=t_max_factor, dt=dt,
                         wrap_factor=wrap_factor, strict=strict)
        self.eta = eta

    def __call__(self, u0: Field) -> Field:
        return self.record(u0).u_plus

    def record(self, u0: Field, probe: ProbeSpec | None = None) -> ScatterRecord:
        return scattering_map(u0, self.spec, eta=self.eta, probe=probe, **self.opts)

    def probe_record(self, grid: Grid, probe: ProbeSpec) -> ScatterRecord:
        return self.record(gaussian_probe(grid, probe), probe)

    def difference(self, other: "ScatteringMap", u0: Field,
                   probe: ProbeSpec | None = None) -> ScatterRecord:
        """Record whose increment is S_self(u0) - S_other(u0), evolved as a pair."""
        if other.spec.p != self.spec.p:
            raise ValueError("maps have different exponents")
        check_small_data(u0, self.eta)
        o = self.opts
        st = _settings(u0, o["tol_scatter"], o["t0"], o["t_max_factor"], o["dt"],
                       o["wrap_factor"], o["strict"])
        if self.spec.is_free and other.spec.is_free:
            return ScatterRecord(probe, u0, Field(u0.grid, np.zeros(u0.grid.n)), [(st.t0, 0.0)],
                                 True, st.dt, 0.0, "difference")
        return _pair_run(u0, self.spec, other.spec, st, "difference", probe)


# ---------------------------------------------------------------------------
# modified map


class _PhaseAccumulator:
    """Trapezoid accumulation of Phi on the input lattice, for one or two rows.

    Row 0 is the (reference) field, row 1 in pair mode is the difference d;
    for pairs the phase difference Phi_a - Phi_b is accumulated from
    2 Re(conj(F r) F d) + |F d|^2 so it never cancels.
    """

    def __init__(self, u0_grid: Grid, pair: bool):
        self.base = u0_grid
        self.pair = pair
        self.phi = np.zeros(u0_grid.n)
        self.dphi = np.zeros(u0_grid.n) if pair else None
        self.t_prev = 0.0
        self.g_prev = None
        self.dg_prev = None

    def _densities(self, grid: Grid, spectrum: np.ndarray):
        ratio = grid.n // self.base.n
        scale = grid.dx * grid.dx / (2.0 * math.pi)
        r = spectrum[0, ::ratio]
        g = (r.real**2 + r.imag**2) * scale
        if not self.pair:
            return g, None
        d = spectrum[1, ::ratio]
        dg = (2.0 * (r.real * d.real + r.imag * d.imag) + d.real**2 + d.imag**2) * scale
        return g, dg

    def start(self, grid: Grid, spectrum: np.ndarray):
        self.g_prev, self.dg_prev = self._densities(grid, spectrum)

    def hook(self, stepper: SplitStepper):
        def on_step(t, spectrum):
            g, dg = self._densities(stepper.grid, spectrum)
            h = t - self.t_prev
            w0 = 0.5 * h / (2.0 * self.t_prev + 1.0)
            w1 = 0.5 * h / (2.0 * t + 1.0)
            self.phi += w0 * self.g_prev + w1 * g
            if self.pair:
                self.dphi += w0 * self.dg_prev + w1 * dg
            self.t_prev, self.g_prev, self.dg_prev = t, g, dg
        return on_step


def _profile(stepper: SplitStepper, base: Grid, horizon: float, row: int) -> np.ndarray:
    """F e^{-iT Delta} of one stepper row, sampled on the base lattice."""
    g = stepper.grid
    ratio = g.n // base.n
    fu = (sfft.fft(stepper.state[row]) * g._ft_phase)[::ratio]
    return np.exp(1j * horizon * base.ks**2) * fu


def _sup_gap(prev, cur, band) -> float:
    return float(np.max(np.abs(cur - prev)[band])) if band.any() else 0.0


def _modified_run(u0: Field, coeff: Coefficient, ref_coeff: Coefficient | None, st: _Settings,
                  probe, pair: bool) -> ModScatterRecord:
    base = u0.grid
    tgt = NonlinearitySpec.perturbed_cubic(coeff)
    ref = NonlinearitySpec.perturbed_cubic(ref_coeff) if pair else None
    if pair:
        # row 0 evolves under the reference coefficient, row 1 is u_a - u_b
        stepper = SplitStepper(base, u0.values, 2.0, st.dt, tgt.potential, ref.potential,
                               pair=True)
    else:
        stepper = SplitStepper(base, u0.values, 2.0, st.dt, tgt.potential)
    acc = _PhaseAccumulator(base, pair)
    acc.start(base, stepper.spectrum())
    band = low_band(base)
    phase_hist = []

    def observe(stp, horizon):
        phase_hist.append((horizon, acc.phi.copy()))
        fr = _profile(stp, base, horizon, 0)
        w_ref = np.exp(1j * acc.phi) * fr
        if not pair:
            return w_ref, None
        fd = _profile(stp, base, horizon, 1)
        dp = acc.dphi
        # e^{i dphi} - 1 written without cancellation
        em1 = 2j * np.sin(0.5 * dp) * np.exp(0.5j * dp)
        dw = np.exp(1j * acc.phi) * (em1 * (fr + fd) + fd)
        return w_ref, dw

    def gap(prev, cur):
        return _sup_gap(prev[1] if pair else prev[0], cur[1] if pair else cur[0], band)

    obs, gaps, converged = _drive(stepper, u0, st, observe, gap, acc.hook(stepper))
    if not converged and st.strict:
        _fail("modified map", st, gaps)
    w_last, dw_last = obs[-1][1]
    return ModScatterRecord(
        probe, u0, w_last, phase_hist, gaps, converged, st.dt,
        profiles=[(t, o[0]) for t, o in obs],
        difference=dw_last,
        difference_profiles=[(t, o[1]) for t, o in obs] if pair else [],
    )


def _check_h11(u0: Field, eta: float):
    n = h11_norm(u0)
    if n >= eta:
        warnings.warn(f"||u0||_H11 = {n:.3g} is not below eta = {eta}", NotSmallData, stacklevel=3)


def modified_scattering_map(u0: Field, coeff: Coefficient, tol: float = TOL_SCATTER,
                            t0: float | None = None, t_max_factor: float = T_MAX_FACTOR,
                            dt: float | None = None, wrap_factor: float = WRAP_FACTOR,
                            strict: bool = True, eta: float = DEFAULT_ETA,
                            probe: ProbeSpec | None = None) -> ModScatterRecord:
    """w_plus for  i u_t = -u_xx + (1 + a)|u|^2 u  at the first horizon with sup gap below tol."""
    _check_h11(u0, eta)
    st = _settings(u0, tol, t0, t_max_factor, dt, wrap_factor, strict)
    return _modified_run(u0, coeff, None, st, probe, pair=False)


class ModifiedScatteringMap:
    def __init__(self, coeff: Coefficient, tol: float = TOL_SCATTER, t0: float | None = None,
                 t_max_factor: float = T_MAX_FACTOR, dt: float | None = None,
                 wrap_factor: float = WRAP_FACTOR, strict: bool = True, eta: float = DEFAULT_ETA):
        self.coeff = coeff
        self.opts = dict(tol=tol, t0=t0, t_max_factor=t_max_factor, dt=dt,
                         wrap_factor=wrap_factor, strict=strict)
        self.eta = eta

    def __call__(self, u0: Field) -> np.ndarray:
        return self.record(u0).w_plus

    def record(self, u0: Field, probe: ProbeSpec | None = None) -> ModScatterRecord:
        return modified_scattering_map(u0, self.coeff, eta=self.eta, probe=probe, **self.opts)

    def probe_record(self, grid: Grid, probe: ProbeSpec) -> ModScatterRecord:
        return self.record(gaussian_probe(grid, probe), probe)

    def difference(self, other: "ModifiedScatteringMap", u0: Field,
                   probe: ProbeSpec | None = None) -> ModScatterRecord:
        """w_self - w_other from one paired run; w_plus is the other map's profile."""
        _check_h11(u0, self.eta)
        o = self.opts
        st = _settings(u0, o["tol"], o["t0"], o["t_max_factor"], o["dt"], o["wrap_factor"],
                       o["strict"])
        return _modified_run(u0, self.coeff, other.coeff, st, probe, pair=True)


# ---------------------------------------------------------------------------
# operator distance


def operator_distance(map_a, map_b, probes, norm_kind: str = "l2") -> float:
    """max over probes of ||S_a(phi) - S_b(phi)|| / ||phi||.

    This samples the supremum defining the operator distance, so it is only a
    lower bound for it.  ``norm_kind="l2"`` uses L2 / L2 with ScatteringMap
    objects; ``"modified"`` uses sup over |k| <= k_max/2 divided by the H11
    norm, with ModifiedScatteringMap objects.
    """
    probes = list(probes)
    if not probes:
        raise EmptyProbeSet("operator_distance needs at least one probe")
    best = 0.0
    for phi in probes:
        if norm_kind == "l2":
            rec = map_a.difference(map_b, phi)
            num = l2_norm(rec.increment)
            den = l2_norm(phi)
        elif norm_kind == "modified":
            rec = map_a.difference(map_b, phi)
            band = low_band(phi.grid)
            num = float(np.max(np.abs(rec.difference)[band]))
            den = h11_norm(phi)
        else:
            raise ValueError(f"unknown norm kind {norm_kind!r}")
        if den == 0:
            raise ValueError("probe must be nonzero")
        best = max(best, num / den)
    return best


def pairing_with_probe(record: ScatterRecord, phi: Field) -> complex:
    """<increment, phi> on the probe's grid (increment cropped or padded to it)."""
    if not np.isclose(record.increment.grid.dx, phi.grid.dx):
        raise GridMismatch("record and probe grids differ in spacing")
    inc = record.increment_on(phi.grid)
    return complex(np.vdot(phi.values, inc) * phi.grid.dx)


def frequency_pairing(w: np.ndarray, phi: Field) -> complex:
    """<w, F phi> on the probe grid's frequency lattice."""
    return complex(np.vdot(fourier(phi), w) * phi.grid.dk)
