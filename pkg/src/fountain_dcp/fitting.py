"""Error-weighted line fits and bracketed root finding for sweep analysis.

Sweep observables come with Monte Carlo standard errors, so every fit here
is weighted by 1/err^2. Points with a zero reported error (exact nulls, for
instance the estimator's real-field shortcut) are given the smallest positive
error in the set; a sweep with no positive errors at all falls back to equal
weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import EstimationError


def _safe_weights(err: np.ndarray) -> np.ndarray:
    err = np.asarray(err, dtype=float)
    positive = err[err > 0.0]
    if positive.size == 0:
        return np.ones_like(err)
    floor = float(np.min(positive))
    return 1.0 / np.square(np.where(err > 0.0, err, floor))


@dataclass(frozen=True)
class LineFit:
    """Weighted least-squares straight line y = slope * x + intercept."""

    slope: float
    intercept: float
    slope_err: float
    intercept_err: float
    cov_slope_intercept: float
    chi2: float
    ndof: int

    def value(self, x):
        return self.slope * np.asarray(x) + self.intercept

    def zero_crossing(self) -> tuple[float, float]:
        """Root of the fitted line with its propagated 1-sigma error."""
        if self.slope == 0.0:
            raise EstimationError("fitted line is flat; no zero crossing")
        x0 = -self.intercept / self.slope
        m, c = self.slope, self.intercept
        var = (
            self.intercept_err**2 / m**2
            + (c * self.slope_err / m**2) ** 2
            - 2.0 * c * self.cov_slope_intercept / m**3
        )
        return x0, math.sqrt(max(var, 0.0))


def weighted_line_fit(
    x: Sequence[float], y: Sequence[float], y_err: Sequence[float]
) -> LineFit:
    """Straight-line fit with per-point errors; needs at least two distinct x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise EstimationError("line fit needs at least two points")
    w = _safe_weights(np.asarray(y_err, dtype=float))
    s = float(np.sum(w))
    sx = float(np.sum(w * x))
    sy = float(np.sum(w * y))
    sxx = float(np.sum(w * x * x))
    sxy = float(np.sum(w * x * y))
    det = s * sxx - sx * sx
    if det <= 0.0 or not math.isfinite(det):
        raise EstimationError("line fit is degenerate; x values do not spread")
    slope = (s * sxy - sx * sy) / det
    intercept = (sxx * sy - sx * sxy) / det
    resid = y - (slope * x + intercept)
    chi2 = float(np.sum(w * resid * resid))
    return LineFit(
        slope=slope,
        intercept=intercept,
        slope_err=math.sqrt(s / det),
        intercept_err=math.sqrt(sxx / det),
        cov_slope_intercept=-sx / det,
        chi2=chi2,
        ndof=max(x.size - 2, 0),
    )


@dataclass(frozen=True)
class ProportionalFit:
    """Weighted fit of y = coefficient * x through the origin."""

    coefficient: float
    coefficient_err: float
    chi2: float
    ndof: int

    def value(self, x):
        return self.coefficient * np.asarray(x)


def proportional_fit(
    x: Sequence[float], y: Sequence[float], y_err: Sequence[float]
) -> ProportionalFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 1:
        raise EstimationError("proportional fit needs at least one point")
    w = _safe_weights(np.asarray(y_err, dtype=float))
    sxx = float(np.sum(w * x * x))
    if sxx <= 0.0 or not math.isfinite(sxx):
        raise EstimationError(
            "proportional fit is degenerate; all abscissae vanish"
        )
    coef = float(np.sum(w * x * y)) / sxx
    resid = y - coef * x
    return ProportionalFit(
        coefficient=coef,
        coefficient_err=math.sqrt(1.0 / sxx),
        chi2=float(np.sum(w * resid * resid)),
        ndof=max(x.size - 1, 0),
    )


def bracketed_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: Optional[float] = None,
    max_iter: int = 200,
) -> float:
    """Root of f on [lo, hi] by secant steps guarded by bisection.

    The bracket must change sign. Secant proposals are accepted only while
    they land strictly inside the current bracket and keep shrinking it;
    otherwise the step falls back to the midpoint, so convergence is never
    worse than bisection. Default tolerance is 1e-4 of the initial span.
    """
    if not (hi > lo):
        raise ValueError("bracket requires hi > lo")
    if tol is None:
        tol = 1.0e-4 * (hi - lo)
    f_lo = f(lo)
    f_hi = f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if math.copysign(1.0, f_lo) == math.copysign(1.0, f_hi):
        raise EstimationError(
            f"no sign change on bracket [{lo:g}, {hi:g}]: "
            f"f(lo)={f_lo:g}, f(hi)={f_hi:g}"
        )
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        x = mid
        if f_hi != f_lo:
            secant = hi - f_hi * (hi - lo) / (f_hi - f_lo)
            if lo + 0.05 * (hi - lo) < secant < hi - 0.05 * (hi - lo):
                x = secant
        f_x = f(x)
        if f_x == 0.0:
            return x
        if math.copysign(1.0, f_x) == math.copysign(1.0, f_lo):
            lo, f_lo = x, f_x
        else:
            hi, f_hi = x, f_x
    return 0.5 * (lo + hi)
