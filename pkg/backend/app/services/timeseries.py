"""
Natural cubic spline interpolation of raw series onto the weekly grid.
"""
import logging
import math
from collections.abc import Iterable

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import solve_banded

from app.core.exceptions import CoverageError, InputValidationError
from app.models import RawSeries, SplineModel, Variable, WeeklySeries
from app.services.ingest import week_start_day

logger = logging.getLogger(__name__)

# 12 lags of a second difference at harvest need 15 weekly values
MIN_WEEKS = 15


def natural_cubic_spline(t: ArrayLike, y: ArrayLike) -> SplineModel:
    """Fit a natural cubic spline through (t, y); at least two knots."""
    x = np.asarray(t, dtype=float)
    v = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != v.shape:
        raise InputValidationError("knots and values must be 1-D arrays of equal length")
    if len(x) < 2:
        raise InputValidationError("a spline needs at least two knots")
    h = np.diff(x)
    if np.any(h <= 0):
        raise InputValidationError("knots must be strictly increasing (no duplicates)")

    n = len(x)
    m = np.zeros(n)
    if n > 2:
        # Interior second derivatives, tridiagonal in banded storage
        ab = np.zeros((3, n - 2))
        ab[0, 1:] = h[1:-1]
        ab[1, :] = 2.0 * (h[:-1] + h[1:])
        ab[2, :-1] = h[1:-1]
        slopes = np.diff(v) / h
        rhs = 6.0 * np.diff(slopes)
        m[1:-1] = solve_banded((1, 1), ab, rhs)
    return SplineModel(
        knots=x.tolist(), values=v.tolist(), second_derivatives=m.tolist()
    )


def fit_natural_cubic_spline(series: RawSeries) -> SplineModel:
    model = natural_cubic_spline(series.timestamps, series.values)
    return model.model_copy(update={"plot_id": series.plot_id, "variable": series.variable})


def evaluate(model: SplineModel, t: ArrayLike) -> np.ndarray:
    x = np.asarray(model.knots)
    v = np.asarray(model.values)
    m = np.asarray(model.second_derivatives)
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(tt < x[0]) or np.any(tt > x[-1]):
        raise CoverageError("evaluation outside the knot range", plot_id=model.plot_id)
    i = np.clip(np.searchsorted(x, tt, side="right") - 1, 0, len(x) - 2)
    h = x[i + 1] - x[i]
    b = (tt - x[i]) / h
    a = 1.0 - b
    # Exact at the knots: a or b is 0 or 1 there and the cubic terms vanish
    return a * v[i] + b * v[i + 1] + (
        (a**3 - a) * m[i] + (b**3 - b) * m[i + 1]
    ) * (h * h) / 6.0


def covered_weeks(model: SplineModel) -> tuple[int, int]:
    """First and last week whose Monday lies inside the knot span."""
    first = math.ceil((model.knots[0] + 3) / 7)
    last = math.floor((model.knots[-1] + 3) / 7)
    return first, last


def resample_weekly(model: SplineModel, start_week: int, n_weeks: int) -> WeeklySeries:
    if n_weeks < 1:
        raise InputValidationError(f"n_weeks must be positive, got {n_weeks}")
    first, last = covered_weeks(model)
    weeks = range(start_week, start_week + n_weeks)
    outside = [w for w in weeks if w < first or w > last]
    if outside:
        raise CoverageError(
            f"plot {model.plot_id}: weeks {outside} outside the data span "
            f"(covered {first}..{last})",
            plot_id=model.plot_id,
            weeks=outside,
        )
    days = np.array([week_start_day(w) for w in weeks], dtype=float)
    values = evaluate(model, days)
    return WeeklySeries(
        plot_id=model.plot_id if model.plot_id is not None else 0,
        variable=model.variable if model.variable is not None else Variable.NDVI,
        start_week=start_week,
        values=values.tolist(),
    )


def interpolate_series(series: RawSeries) -> WeeklySeries:
    """Weekly series over the whole covered window of a raw series."""
    model = fit_natural_cubic_spline(series)
    first, last = covered_weeks(model)
    n_weeks = last - first + 1
    if n_weeks < MIN_WEEKS:
        raise CoverageError(
            f"plot {series.plot_id} {series.variable.value}: "
            f"{max(n_weeks, 0)} weekly values, {MIN_WEEKS} required",
            plot_id=series.plot_id,
        )
    return resample_weekly(model, first, n_weeks)


def interpolate_all(series: Iterable[RawSeries]) -> list[WeeklySeries]:
    weekly: list[WeeklySeries] = []
    for s in series:
        try:
            weekly.append(interpolate_series(s))
        except CoverageError as exc:
            logger.warning(f"dropping series: {exc}")
    return weekly
