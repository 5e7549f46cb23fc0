"""Periodic grid, Fourier transform pair, free Schrodinger propagator and probes.

The torus [-L/2, L/2) stands in for the real line.  Samples sit at
``x_j = -L/2 + j*dx`` and frequencies follow FFT ordering,
``k_m = 2*pi*fftfreq(n, dx)``.

Transform convention (unitary, matches the continuous transform with a
``(2*pi)**-0.5`` prefactor)::

    F u(k_m) = dx / sqrt(2*pi) * exp(-1j * k_m * x_0) * fft(u)[m],   x_0 = -L/2

so ``sum |F u|^2 dk == sum |u|^2 dx`` with ``dk = 2*pi/L``.  The free
propagator is the multiplier ``exp(-1j*t*k**2)``, i.e. the flow of
``i u_t = -u_xx``; negative ``t`` runs it backwards.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import GridMismatch, NonPowerOfTwo, TruncationRisk

SQRT_2PI = float(np.sqrt(2.0 * np.pi))


@dataclass(frozen=True)
class Grid:
    n: int
    length: float

    def __post_init__(self):
        n = int(self.n)
        if n < 16 or n & (n - 1):
            raise NonPowerOfTwo(f"grid size must be a power of two >= 16, got {self.n}")
        if not self.length > 0:
            raise ValueError(f"domain length must be positive, got {self.length}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "length", float(self.length))

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def dk(self) -> float:
        return 2.0 * np.pi / self.length

    @cached_property
    def xs(self) -> np.ndarray:
        xs = -0.5 * self.length + self.dx * np.arange(self.n)
        xs.flags.writeable = False
        return xs

    @cached_property
    def ks(self) -> np.ndarray:
        ks = 2.0 * np.pi * sfft.fftfreq(self.n, self.dx)
        ks.flags.writeable = False
        return ks

    @cached_property
    def _ft_phase(self) -> np.ndarray:
        ph = np.exp(-1j * self.ks * self.xs[0]) * (self.dx / SQRT_2PI)
        ph.flags.writeable = False
        return ph

    def extended(self, factor: int = 2) -> "Grid":
        """Same spacing, ``factor`` times the length."""
        return Grid(self.n * factor, self.length * factor)


def make_grid(n: int, length: float) -> Grid:
    return Grid(n, length)


@dataclass(frozen=True)
class Field:
    """Complex samples of a wavefunction on a Grid.  Treated as immutable."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.complex128)
        if vals.shape != (self.grid.n,):
            raise GridMismatch(f"expected {self.grid.n} samples, got shape {vals.shape}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def _check(self, other: "Field"):
        if other.grid != self.grid:
            raise GridMismatch(f"{self.grid} vs {other.grid}")

    def __add__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.grid, self.values - other.values)

    def scaled(self, c: complex) -> "Field":
        return Field(self.grid, c * self.values)


def zeros(grid: Grid) -> Field:
    return Field(grid, np.zeros(grid.n, dtype=np.complex128))


@dataclass(frozen=True)
class ProbeSpec:
    """Gaussian probe ``amplitude * exp(i v (x-x0)) * exp(-(x-x0)^2 / (4 sigma^2))``."""

    sigma: float
    x0: float = 0.0
    amplitude: float = 1.0
    velocity: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"probe width must be positive, got {self.sigma}")
        if self.amplitude < 0:
            raise ValueError(f"probe amplitude must be >= 0, got {self.amplitude}")

    def with_amplitude(self, amplitude: float) -> "ProbeSpec":
        return ProbeSpec(self.sigma, self.x0, amplitude, self.velocity)


def periodic_offset(grid: Grid, x0: float) -> np.ndarray:
    """Signed distance x - x0 wrapped into [-L/2, L/2)."""
    L = grid.length
    return np.mod(grid.xs - x0 + 0.5 * L, L) - 0.5 * L


def gaussian_probe(grid: Grid, spec: ProbeSpec) -> Field:
    if spec.sigma > grid.length / 10:
        raise TruncationRisk(f"probe width {spec.sigma} exceeds L/10 = {grid.length / 10}")
    d = periodic_offset(grid, spec.x0)
    vals = spec.amplitude * np.exp(-(d**2) / (4.0 * spec.sigma**2))
    if spec.velocity:
        vals = vals * np.exp(1j * spec.velocity * d)
    return Field(grid, vals)


def probe_l2_norm(spec: ProbeSpec) -> float:
    """Exact L2 norm of the probe on the line: eps * sigma^(1/2) * (2 pi)^(1/4)."""
    return spec.amplitude * np.sqrt(spec.sigma) * (2.0 * np.pi) ** 0.25


def fourier(u: Field) -> np.ndarray:
    """Samples of the unitary transform at ``u.grid.ks`` (FFT order)."""
    return sfft.fft(u.values) * u.grid._ft_phase


def inverse_fourier(grid: Grid, fhat: np.ndarray) -> Field:
    return Field(grid, sfft.ifft(np.asarray(fhat) / grid._ft_phase))


def free_propagate(u: Field, t: float) -> Field:
    """``e^{it Delta} u``: multiplier exp(-i t k^2) on the periodic lattice."""
    if t == 0:
        return u
    mult = np.exp(-1j * t * u.grid.ks**2)
    return Field(u.grid, sfft.ifft(mult * sfft.fft(u.values)))


def inner(u: Field, v: Field) -> complex:
    """Riemann sum of u * conj(v) dx (exact trapezoid rule for periodic data)."""
    if u.grid != v.grid:
        raise GridMismatch(f"{u.grid} vs {v.grid}")
    return complex(np.vdot(v.values, u.values) * u.grid.dx)


def inner_freq(fhat: np.ndarray, ghat: np.ndarray, grid: Grid) -> complex:
    """Frequency-side pairing sum fhat * conj(ghat) dk."""
    return complex(np.vdot(ghat, fhat) * grid.dk)


def l2_norm(u: Field) -> float:
    return float(np.sqrt(np.sum(u.values.real**2 + u.values.imag**2) * u.grid.dx))


def linf_norm(u: Field) -> float:
    return float(np.max(np.abs(u.values))) if u.grid.n else 0.0


def derivative(u: Field) -> Field:
    return Field(u.grid, sfft.ifft(1j * u.grid.ks * sfft.fft(u.values)))


def field_moments(u: Field) -> tuple[float, float, float, float]:
    """(mean x, std x, mean k, std k) of |u|^2 and |F u|^2 treated as densities."""
    dens = np.abs(u.values) ** 2
    mass = dens.sum()
    if mass == 0:
        return 0.0, 0.0, 0.0, 0.0
    xs = u.grid.xs
    mx = float((xs * dens).sum() / mass)
    sx = float(np.sqrt(max(((xs - mx) ** 2 * dens).sum() / mass, 0.0)))
    fd = np.abs(sfft.fft(u.values)) ** 2
    ks = u.grid.ks
    mk = float((ks * fd).sum() / fd.sum())
    sk = float(np.sqrt(max(((ks - mk) ** 2 * fd).sum() / fd.sum(), 0.0)))
    return mx, sx, mk, sk


def required_length(u: Field, horizon: float, wrap_factor: float = 40.0) -> float:
    """Domain length keeping the freely dispersed packet clear of the wrap point.

    For a centred Gaussian of width sigma this is ``wrap_factor * max(sigma,
    horizon/sigma)``; drift from a mean position or momentum is added on.
    """
    mx, sx, mk, sk = field_moments(u)
    spread = max(sx, 2.0 * horizon * sk)
    return wrap_factor * spread + 2.0 * (abs(mx) + 2.0 * horizon * abs(mk))


def extend_values(grid: Grid, values: np.ndarray, factor: int = 2) -> tuple[Grid, np.ndarray]:
    """Zero-pad samples (last axis) onto a grid ``factor`` times longer, same dx."""
    new = grid.extended(factor)
    out = np.zeros(values.shape[:-1] + (new.n,), dtype=values.dtype)
    start = (new.n - grid.n) // 2
    out[..., start:start + grid.n] = values
    return new, out


def extend(u: Field, factor: int = 2) -> Field:
    new, vals = extend_values(u.grid, u.values, factor)
    return Field(new, vals)


def restrict_frequencies(fine: Grid, coarse: Grid, fhat: np.ndarray) -> np.ndarray:
    """Pick the samples of ``fhat`` (on ``fine``) lying on the lattice of ``coarse``.

    Valid when ``fine`` is an extension of ``coarse`` with the same dx.
    """
    ratio = fine.n // coarse.n
    if fine.n != ratio * coarse.n or not np.isclose(fine.dx, coarse.dx):
        raise GridMismatch("frequency lattices are not nested")
    return np.asarray(fhat)[..., ::ratio]


def window_values(src: Grid, values: np.ndarray, dst: Grid) -> np.ndarray:
    """Move samples between nested centred grids of equal dx: zero-pad or crop."""
    if not np.isclose(src.dx, dst.dx):
        raise GridMismatch("grids have different spacing")
    if dst.n == src.n:
        return np.asarray(values)
    if dst.n > src.n:
        out = np.zeros(values.shape[:-1] + (dst.n,), dtype=np.asarray(values).dtype)
        start = (dst.n - src.n) // 2
        out[..., start:start + src.n] = values
        return out
    start = (src.n - dst.n) // 2
    return np.asarray(values)[..., start:start + dst.n]
