import math
import warnings

import numpy as np
import pytest

from nls_lab.errors import EmptyProbeSet, GridMismatch, NoConvergence, NotSmallData
from nls_lab.nls_solver import Coefficient, NonlinearitySpec, SolverConfig, evolve
from nls_lab.scattering_maps import (ModifiedScatteringMap, ScatteringMap, default_t0,
                                     h11_norm, low_band, modified_scattering_map,
                                     operator_distance, pairing_with_probe, scattering_map)
from nls_lab.spectral_core import (Field, ProbeSpec, fourier, free_propagate, gaussian_probe,
                                   l2_norm, make_grid, zeros)

G = make_grid(256, 64.0)
FAST = dict(t0=8.0, t_max_factor=1.0, strict=False)


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotSmallData)
        yield


def probe(eps, sigma=1.0, x0=0.0, v=0.0, grid=G):
    return gaussian_probe(grid, ProbeSpec(sigma, x0, eps, v))


# --- h11 ----------------------------------------------------------------------------

def test_h11_zero():
    assert h11_norm(zeros(G)) == 0.0


def test_h11_unit_gaussian():
    # ||phi||^2 = sqrt(2 pi), ||phi'||^2 = sqrt(2 pi)/4, ||x phi||^2 = sqrt(2 pi)
    g = make_grid(1024, 100.0)
    assert h11_norm(probe(1.0, grid=g)) == pytest.approx(1.5 * (2 * math.pi) ** 0.25, abs=1e-8)


def h11_closed(sigma):
    # Gaussian moments of exp(-x^2/(4 sigma^2)): sigma, 1/(4 sigma), sigma^3 times sqrt(2 pi)
    return math.sqrt(math.sqrt(2 * math.pi) * (sigma + 0.25 / sigma + sigma**3))


@pytest.mark.parametrize("sigma", [0.25, 0.5, 1.0, 2.0])
def test_h11_gaussian_moments(sigma):
    g = make_grid(4096, 100.0)
    assert h11_norm(probe(1.0, sigma, grid=g)) == pytest.approx(h11_closed(sigma), abs=1e-8)


def test_h11_sigma_minus_half_scaling():
    # the derivative term takes over as sigma -> 0
    g = make_grid(8192, 64.0)
    small = [h11_norm(probe(1.0, s, grid=g)) for s in (0.04, 0.02, 0.01)]
    assert small[0] < small[1] < small[2]
    assert small[2] / small[1] == pytest.approx(math.sqrt(2), rel=0.01)


def test_default_t0():
    assert default_t0(0.5) == 8.0
    assert default_t0(2.0) == 32.0


# --- scattering_map -------------------------------------------------------------------

def test_free_map_is_identity():
    u0 = probe(0.05)
    rec = scattering_map(u0, NonlinearitySpec.power(Coefficient.zero(G), 3.0))
    assert np.array_equal(rec.u_plus.values, u0.values)
    assert len(rec.horizons) == 1 and rec.converged


def test_zero_data_maps_to_zero():
    rec = scattering_map(probe(0.0), NonlinearitySpec.power(Coefficient.gaussian_bump(G), 3.0))
    assert np.all(rec.u_plus.values == 0)


def test_gaps_decrease_p3():
    spec = NonlinearitySpec.power(Coefficient.gaussian_bump(G), 3.0)
    rec = scattering_map(probe(0.05), spec)
    gaps = [g for _, g in rec.horizons]
    assert rec.converged and gaps[-1] < 1e-6
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_map_matches_direct_evolution():
    # the map may extend the grid to avoid wrap-around; evolve directly on that grid
    spec = NonlinearitySpec.power(Coefficient.gaussian_bump(G), 2.0)
    u0 = probe(0.3)
    ours = scattering_map(u0, spec, dt=0.01, **FAST).u_plus
    big = ours.grid
    assert big.length >= G.length and big.dx == pytest.approx(G.dx)
    spec_big = NonlinearitySpec.power(Coefficient.gaussian_bump(big), 2.0)
    u_T = evolve(probe(0.3, grid=big), spec_big, SolverConfig(0.01, 8.0), eta=1.0).final
    direct = free_propagate(u_T, -8.0)
    assert np.max(np.abs(ours.values - direct.values)) < 1e-12


def test_map_is_norm_preserving():
    spec = NonlinearitySpec.power(Coefficient.double_bump(G, 2.0), 2.5)
    u0 = probe(0.08, 0.8, 0.3)
    assert abs(l2_norm(scattering_map(u0, spec, **FAST).u_plus) - l2_norm(u0)) < 1e-10


def test_no_convergence_when_strict():
    spec = NonlinearitySpec.power(Coefficient.gaussian_bump(G), 2.0)
    with pytest.raises(NoConvergence):
        scattering_map(probe(0.05), spec, tol_scatter=1e-14, t0=2.0, t_max_factor=2.0)


def test_randomized_gaps_mostly_nonincreasing():
    rng = np.random.default_rng(7)
    monotone = 0
    n = 10
    for _ in range(n):
        p = rng.uniform(2.0, 4.0)
        a = Coefficient.gaussian_bump(G, rng.uniform(-1, 1), rng.uniform(0.5, 1.5),
                                      rng.uniform(-1, 1))
        u0 = probe(rng.uniform(0.01, 0.05), rng.uniform(0.5, 1.5), rng.uniform(-1, 1))
        rec = scattering_map(u0, NonlinearitySpec.power(a, p), t0=4.0, t_max_factor=8.0,
                             strict=False)
        gaps = [g for _, g in rec.horizons]
        monotone += all(b <= a for a, b in zip(gaps, gaps[1:]))
    assert monotone >= 0.9 * n


def test_difference_record_antisymmetric():
    a = NonlinearitySpec.power(Coefficient.gaussian_bump(G, 1.0), 3.0)
    b = NonlinearitySpec.power(Coefficient.gaussian_bump(G, 0.5, 1.0, 0.4), 3.0)
    ma, mb = ScatteringMap(a, **FAST), ScatteringMap(b, **FAST)
    u0 = probe(0.05)
    d1 = ma.difference(mb, u0).increment.values
    d2 = mb.difference(ma, u0).increment.values
    direct = ma(u0).values - mb(u0).values
    assert np.allclose(d1, -d2, rtol=0, atol=1e-12 * np.abs(d1).max())
    assert np.allclose(d1, direct, rtol=0, atol=1e-6 * np.abs(d1).max())


def test_pairing_grid_mismatch():
    spec = NonlinearitySpec.power(Coefficient.gaussian_bump(G), 3.0)
    rec = scattering_map(probe(0.05), spec, **FAST)
    with pytest.raises(GridMismatch):
        pairing_with_probe(rec, probe(1.0, grid=make_grid(512, 64.0)))


# --- modified map -----------------------------------------------------------------

def test_modified_zero_data():
    rec = modified_scattering_map(probe(0.0), Coefficient.gaussian_bump(G, 0.2), **FAST)
    assert np.all(rec.w_plus == 0)


def test_modified_profile_modulus_and_phase():
    # a wide grid keeps the map from extending, so both paths use the same lattice
    g = make_grid(1024, 256.0)
    a = Coefficient.gaussian_bump(g, 0.2)
    u0 = probe(0.05, grid=g)
    rec = modified_scattering_map(u0, a, t0=4.0, t_max_factor=2.0, strict=False)
    spec = NonlinearitySpec.perturbed_cubic(a)
    assert len(rec.profiles) == len(rec.phase_history) >= 2
    for (T, w), (T2, _) in zip(rec.profiles, rec.phase_history):
        assert T == T2
        u_T = evolve(u0, spec, SolverConfig(rec.dt, T), eta=1.0).final
        fu = fourier(free_propagate(u_T, -T))
        assert np.max(np.abs(np.abs(w) - np.abs(fu))) < 1e-12
    prev = np.zeros(g.n)
    for _, phase in rec.phase_history:
        assert np.isrealobj(phase)
        assert np.all(phase >= prev)
        prev = phase


def test_modified_gaps_decrease():
    rec = modified_scattering_map(probe(0.05), Coefficient.gaussian_bump(G, 0.2), t0=8.0,
                                  t_max_factor=16.0, strict=False)
    gaps = [g for _, g in rec.cauchy_gaps]
    assert len(gaps) >= 4
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_modified_pair_matches_separate_runs():
    a = Coefficient.gaussian_bump(G, 0.3)
    b = Coefficient.gaussian_bump(G, 0.1, 0.7, 0.5)
    ma, mb = ModifiedScatteringMap(a, **FAST), ModifiedScatteringMap(b, **FAST)
    u0 = probe(0.05)
    rec = ma.difference(mb, u0)
    wa, wb = ma(u0), mb(u0)
    assert np.max(np.abs(rec.w_plus - wb)) < 1e-13
    assert np.max(np.abs(rec.difference - (wa - wb))) < 1e-6 * np.max(np.abs(rec.difference))


# --- operator distance ----------------------------------------------------------

def test_distance_empty():
    m = ScatteringMap(NonlinearitySpec.power(Coefficient.gaussian_bump(G), 3.0))
    with pytest.raises(EmptyProbeSet):
        operator_distance(m, m, [])


def test_distance_same_maps_zero():
    m = ScatteringMap(NonlinearitySpec.power(Coefficient.gaussian_bump(G), 3.0), **FAST)
    assert operator_distance(m, m, [probe(0.05), probe(0.03, 0.5)]) == 0.0


def test_distance_symmetric_and_monotone_in_probe_set():
    ma = ScatteringMap(NonlinearitySpec.power(Coefficient.gaussian_bump(G), 2.0), **FAST)
    mb = ScatteringMap(NonlinearitySpec.power(Coefficient.gaussian_bump(G, 1.1), 2.0), **FAST)
    small = [probe(0.05)]
    big = small + [probe(0.05, 0.5, 0.2), probe(0.04, 1.0, 0.0, 1.5)]
    d_small = operator_distance(ma, mb, small)
    assert operator_distance(mb, ma, small) == pytest.approx(d_small, rel=1e-12)
    assert operator_distance(ma, mb, big) >= d_small


def test_distance_modified_norm():
    ma = ModifiedScatteringMap(Coefficient.gaussian_bump(G, 0.2), **FAST)
    mb = ModifiedScatteringMap(Coefficient.gaussian_bump(G, 0.25), **FAST)
    d = operator_distance(ma, mb, [probe(0.05)], norm_kind="modified")
    assert d > 0
    assert operator_distance(ma, ma, [probe(0.05)], norm_kind="modified") == 0.0
    with pytest.raises(ValueError):
        operator_distance(ma, mb, [probe(0.05)], norm_kind="sup")


def test_low_band():
    band = low_band(G)
    kmax = np.abs(G.ks).max()
    assert np.all(np.abs(G.ks[band]) <= kmax / 2)
    assert band.sum() > G.n // 2 - 2


@pytest.mark.slow
def test_distance_stable_under_dt_halving():
    a = Coefficient.gaussian_bump(G)
    b = a.scaled(1.1)
    sigmas = np.geomspace(0.5, 2.0, 5)
    x0s = [-1.0, -0.3, 0.3, 1.0]
    probes = [probe(0.04, s, x) for s in sigmas for x in x0s]
    out = []
    for dt in (0.01, 0.005):
        ma = ScatteringMap(NonlinearitySpec.power(a, 3.0), dt=dt, **FAST)
        mb = ScatteringMap(NonlinearitySpec.power(b, 3.0), dt=dt, **FAST)
        out.append(operator_distance(ma, mb, probes))
    assert out[0] > 0
    assert out[1] == pytest.approx(out[0], rel=0.05)
