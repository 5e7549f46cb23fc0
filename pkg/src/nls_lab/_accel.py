"""Pointwise hot kernels, compiled with numba when available.

Every kernel has a pure-numpy twin with identical semantics.  The numpy path
is used when numba is missing or when ``NLS_LAB_DISABLE_NUMBA`` is set to a
truthy value before import.  ``benchmarks/bench_kernels.py`` times both.

The split-step loop spends its time in FFTs (numpy/scipy) and in these
kernels; the pair kick in particular builds many temporaries under numpy.
"""

import math
import os

import numpy as np

_FLAG = os.environ.get("NLS_LAB_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    import numba as nb
except ImportError:  # pragma: no cover - numba is a declared dependency
    nb = None

USE_NUMBA = nb is not None and not _DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


def _njit(func):
    if nb is None:
        return func
    return nb.njit(cache=True, fastmath=False, nogil=True)(func)


# ---------------------------------------------------------------------------
# numpy implementations


def _pow_diff_np(abs2_ref, delta, p):
    """|u|^p - |r|^p given |r|^2 and delta = |u|^2 - |r|^2, without cancellation."""
    if p == 2.0:
        return delta
    half = 0.5 * p
    out = np.empty_like(abs2_ref)
    pos = abs2_ref > 0.0
    ratio = delta[pos] / abs2_ref[pos]
    out[pos] = abs2_ref[pos] ** half * np.expm1(half * np.log1p(ratio))
    out[~pos] = np.maximum(delta[~pos], 0.0) ** half
    return out


def kick_numpy(u, coef, p, dt):
    """Return u * exp(-i dt coef |u|^p)."""
    abs2 = u.real**2 + u.imag**2
    mod_p = abs2 if p == 2.0 else abs2 ** (0.5 * p)
    return u * np.exp(-1j * dt * coef * mod_p)


def kick_pair_numpy(ref, diff, coef_ref, coef_tgt, p, dt):
    """Advance (ref, diff) through one nonlinear sub-flow, in place.

    ``ref`` follows coef_ref |.|^p, the target u = ref + diff follows
    coef_tgt |.|^p.  The update of ``diff`` is written so that no two
    nearly-equal quantities are ever subtracted.
    """
    abs2_ref = ref.real**2 + ref.imag**2
    cross = ref.real * diff.real + ref.imag * diff.imag
    delta = 2.0 * cross + diff.real**2 + diff.imag**2
    abs2_tgt = np.maximum(abs2_ref + delta, 0.0)
    if p == 2.0:
        mod_ref, mod_tgt = abs2_ref, abs2_tgt
    else:
        mod_ref, mod_tgt = abs2_ref ** (0.5 * p), abs2_tgt ** (0.5 * p)
    theta_ref = dt * coef_ref * mod_ref
    dtheta = dt * ((coef_tgt - coef_ref) * mod_tgt + coef_ref * _pow_diff_np(abs2_ref, delta, p))
    rot_ref = np.exp(-1j * theta_ref)
    rot_d = np.exp(-1j * dtheta)
    # exp(-i dtheta) - 1 without cancellation
    bump = -2j * np.sin(0.5 * dtheta) * np.exp(-0.5j * dtheta)
    new_ref = ref * rot_ref
    diff[:] = diff * rot_ref * rot_d + new_ref * bump
    ref[:] = new_ref


def gaussian_moment_sum_numpy(xs, weights, x0, c):
    """Sum_j weights_j exp(-c (x_j - x0)^2)."""
    return float(np.dot(weights, np.exp(-c * (xs - x0) ** 2)))


# ---------------------------------------------------------------------------
# numba implementations


@_njit
def _kick_nb(u, coef, p, dt):
    out = np.empty_like(u)
    half = 0.5 * p
    for j in range(u.shape[0]):
        re = u[j].real
        im = u[j].imag
        a2 = re * re + im * im
        m = a2 if p == 2.0 else a2**half
        th = dt * coef[j] * m
        c = math.cos(th)
        s = math.sin(th)
        out[j] = complex(re * c + im * s, im * c - re * s)
    return out


@_njit
def _kick_pair_nb(ref, diff, coef_ref, coef_tgt, p, dt):
    half = 0.5 * p
    for j in range(ref.shape[0]):
        rr = ref[j].real
        ri = ref[j].imag
        dr = diff[j].real
        di = diff[j].imag
        a2 = rr * rr + ri * ri
        delta = 2.0 * (rr * dr + ri * di) + dr * dr + di * di
        u2 = a2 + delta
        if u2 < 0.0:
            u2 = 0.0
        if p == 2.0:
            mref = a2
            mtgt = u2
            pdiff = delta
        else:
            mref = a2**half
            mtgt = u2**half
            if a2 > 0.0:
                pdiff = mref * math.expm1(half * math.log1p(delta / a2))
            else:
                pdiff = mtgt
        th = dt * coef_ref[j] * mref
        dth = dt * ((coef_tgt[j] - coef_ref[j]) * mtgt + coef_ref[j] * pdiff)
        cr = math.cos(th)
        sr = math.sin(th)
        nr = complex(rr * cr + ri * sr, ri * cr - rr * sr)
        sh = math.sin(0.5 * dth)
        ch = math.cos(0.5 * dth)
        # e^{-i dth} = cd - i sd, and e^{-i dth} - 1 = bre + i bim without cancellation
        bre = -2.0 * sh * sh
        bim = -2.0 * sh * ch
        cd = 1.0 + bre
        sd = -bim
        # diff * e^{-i th} * e^{-i dth}
        t1 = complex(dr * cr + di * sr, di * cr - dr * sr)
        t1 = complex(t1.real * cd + t1.imag * sd, t1.imag * cd - t1.real * sd)
        t2 = complex(nr.real * bre - nr.imag * bim, nr.real * bim + nr.imag * bre)
        diff[j] = t1 + t2
        ref[j] = nr


@_njit
def _gaussian_moment_sum_nb(xs, weights, x0, c):
    acc = 0.0
    for j in range(xs.shape[0]):
        d = xs[j] - x0
        e = c * d * d
        if e < 745.0:
            acc += weights[j] * math.exp(-e)
    return acc


def kick_numba(u, coef, p, dt):
    return _kick_nb(np.ascontiguousarray(u, dtype=np.complex128),
                    np.ascontiguousarray(coef, dtype=np.float64), float(p), float(dt))


def kick_pair_numba(ref, diff, coef_ref, coef_tgt, p, dt):
    _kick_pair_nb(ref, diff, coef_ref, coef_tgt, float(p), float(dt))


def gaussian_moment_sum_numba(xs, weights, x0, c):
    return _gaussian_moment_sum_nb(xs, weights, float(x0), float(c))


IMPLEMENTATIONS = {
    "numpy": {
        "kick": kick_numpy,
        "kick_pair": kick_pair_numpy,
        "gaussian_moment_sum": gaussian_moment_sum_numpy,
    },
}
if nb is not None:
    IMPLEMENTATIONS["numba"] = {
        "kick": kick_numba,
        "kick_pair": kick_pair_numba,
        "gaussian_moment_sum": gaussian_moment_sum_numba,
    }

kick = IMPLEMENTATIONS[BACKEND]["kick"]
kick_pair = IMPLEMENTATIONS[BACKEND]["kick_pair"]
gaussian_moment_sum = IMPLEMENTATIONS[BACKEND]["gaussian_moment_sum"]
