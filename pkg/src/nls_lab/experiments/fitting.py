"""Least-squares rate fits on transformed coordinates.

power_law:  log y = slope * log x + intercept
log_law:    y = slope / |log x| + intercept
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..errors import DegenerateFit

MIN_POINTS = 4
MIN_DECADES = 1.0


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    model: str
    n: int = 0

    def as_dict(self) -> dict:
        return {"model": self.model, "slope": self.slope, "intercept": self.intercept,
                "r_squared": self.r_squared, "n": self.n}


def _prepare(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be a sequence of (x, y) pairs")
    if len(pts) < MIN_POINTS:
        raise DegenerateFit(f"need at least {MIN_POINTS} points, got {len(pts)}")
    x, y = pts[:, 0], pts[:, 1]
    if np.any(x <= 0):
        raise ValueError("x values must be positive")
    if math.log10(x.max() / x.min()) < MIN_DECADES - 1e-12:
        raise DegenerateFit(f"x spans less than {MIN_DECADES:g} decade")
    return x, y


def _linfit(u, v, model, n) -> FitResult:
    if np.ptp(v) == 0.0:
        # a constant response is fitted exactly by a flat line
        return FitResult(0.0, float(v[0]), 1.0, model, n)
    res = stats.linregress(u, v)
    r2 = float(min(1.0, max(0.0, res.rvalue**2)))
    return FitResult(float(res.slope), float(res.intercept), r2, model, n)


def fit_power_law(points) -> FitResult:
    x, y = _prepare(points)
    if np.any(y <= 0):
        raise ValueError("power-law fit needs positive y")
    return _linfit(np.log(x), np.log(y), "power_law", len(x))


def fit_log_law(points) -> FitResult:
    x, y = _prepare(points)
    ax = np.abs(np.log(x))
    if np.any(ax == 0):
        raise ValueError("log-law fit needs x != 1")
    return _linfit(1.0 / ax, y, "log_law", len(x))
