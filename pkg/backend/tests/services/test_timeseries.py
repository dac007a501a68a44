import numpy as np
import pytest

from app.core.exceptions import CoverageError, InputValidationError
from app.models import RawSeries, Variable
from app.services import timeseries
from app.services.ingest import week_start_day
from tests.utils.oracles import thomas_natural_spline
from tests.utils.utils import random_knots


def raw(t: list[float] | np.ndarray, y: list[float] | np.ndarray) -> RawSeries:
    return RawSeries(
        plot_id=4,
        variable=Variable.TEMP,
        timestamps=[float(v) for v in t],
        values=[float(v) for v in y],
    )


def test_interpolates_knots() -> None:
    model = timeseries.natural_cubic_spline([0, 7, 14], [1, 2, 3])
    np.testing.assert_array_equal(timeseries.evaluate(model, [0, 7, 14]), [1, 2, 3])


def test_reproduces_affine_data() -> None:
    model = timeseries.fit_natural_cubic_spline(raw([0, 16, 32, 48], [0, 32, 64, 96]))
    assert timeseries.evaluate(model, 7)[0] == pytest.approx(14, abs=1e-12)


def test_natural_boundary() -> None:
    model = timeseries.natural_cubic_spline([0, 3, 5, 11, 12], [2, -1, 4, 0, 3])
    assert model.second_derivatives[0] == 0.0
    assert model.second_derivatives[-1] == 0.0


def test_knot_interpolation_random(g: np.random.Generator) -> None:
    for _ in range(20):
        t, y = random_knots(g, int(g.integers(4, 40)))
        model = timeseries.natural_cubic_spline(t, y)
        err = np.abs(timeseries.evaluate(model, t) - y)
        assert np.all(err <= 1e-12 * np.maximum(1.0, np.abs(y)))


def test_matches_tridiagonal_oracle(g: np.random.Generator) -> None:
    for _ in range(100):
        t, y = random_knots(g, int(g.integers(4, 30)))
        x = g.uniform(t[0], t[-1], 50)
        model = timeseries.natural_cubic_spline(t, y)
        expected = thomas_natural_spline(t, y, x)
        np.testing.assert_allclose(timeseries.evaluate(model, x), expected, rtol=0, atol=1e-9)


def test_rejects_bad_knots() -> None:
    with pytest.raises(InputValidationError):
        timeseries.natural_cubic_spline([0, 7, 7, 14], [1, 2, 3, 4])
    with pytest.raises(InputValidationError):
        timeseries.natural_cubic_spline([0, 14, 7, 21], [1, 2, 3, 4])
    with pytest.raises(ValueError):
        raw([0, 7, 7, 14], [1, 2, 3, 4])


def test_resample_constant() -> None:
    model = timeseries.fit_natural_cubic_spline(raw(np.arange(0, 200, 5), np.full(40, 3.5)))
    first, last = timeseries.covered_weeks(model)
    weekly = timeseries.resample_weekly(model, first, last - first + 1)
    np.testing.assert_allclose(weekly.values, 3.5, rtol=0, atol=1e-12)
    assert weekly.plot_id == 4
    assert weekly.variable is Variable.TEMP


def test_resample_affine() -> None:
    t = np.arange(0.0, 400.0, 16.0)
    model = timeseries.fit_natural_cubic_spline(raw(t, 2.0 - 0.05 * t))
    first, last = timeseries.covered_weeks(model)
    weekly = timeseries.resample_weekly(model, first, last - first + 1)
    days = np.array([week_start_day(w) for w in range(first, last + 1)], dtype=float)
    np.testing.assert_allclose(weekly.values, 2.0 - 0.05 * days, rtol=0, atol=1e-10)


def test_resample_rejects_extrapolation() -> None:
    model = timeseries.fit_natural_cubic_spline(raw(np.arange(0, 200, 5), np.arange(40)))
    first, last = timeseries.covered_weeks(model)
    assert week_start_day(first) >= 0
    assert week_start_day(last) <= 195
    with pytest.raises(CoverageError) as exc:
        timeseries.resample_weekly(model, first, last - first + 2)
    assert exc.value.weeks == [last + 1]


def test_refinement_stability(g: np.random.Generator) -> None:
    t, y = random_knots(g, 25)
    model = timeseries.natural_cubic_spline(t, y)
    extra = 0.5 * (t[10] + t[11])
    t2 = np.insert(t, 11, extra)
    y2 = np.insert(y, 11, timeseries.evaluate(model, extra)[0])
    refined = timeseries.natural_cubic_spline(t2, y2)
    x = np.linspace(t[0], t[-1], 400)
    np.testing.assert_allclose(
        timeseries.evaluate(refined, x), timeseries.evaluate(model, x), rtol=0, atol=1e-9
    )


def test_interpolate_series_needs_fifteen_weeks() -> None:
    short = raw(np.arange(0, 70, 7), np.arange(10))
    with pytest.raises(CoverageError):
        timeseries.interpolate_series(short)
    assert timeseries.interpolate_all([short]) == []
    long = raw(np.arange(0, 140, 7), np.arange(20))
    (weekly,) = timeseries.interpolate_all([long])
    assert len(weekly.values) >= timeseries.MIN_WEEKS
