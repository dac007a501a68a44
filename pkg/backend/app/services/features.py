"""
Velocity/acceleration lag features and the 81-column covariate layout.

Layout of x = (z, w): the nine controls, then six blocks of twelve lags in the
order VEL_NDVI, ACCEL_NDVI, VEL_PREC, ACCEL_PREC, VEL_TEMP, ACCEL_TEMP, each
block ordered d = 1 (most recent) .. 12. Block b, lag d is w[12*b + d - 1].
"""
import logging
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from app.core.exceptions import CoverageError, InputValidationError, LayoutError
from app.models import (
    CONTROL_FIELDS,
    ControlVector,
    Dataset,
    FeatureVector,
    FeaturizeResult,
    Order,
    PlotRecord,
    SkipRecord,
    Variable,
    WeeklySeries,
)

logger = logging.getLogger(__name__)

N_LAGS = 12
BLOCKS: tuple[tuple[Variable, Order], ...] = tuple(
    (variable, order) for variable in Variable for order in Order
)
RESPONSE = "prod_hect"

WeeklyStore = Mapping[tuple[int, Variable], WeeklySeries]

_PREFIX = {Order.VELOCITY: "vel", Order.ACCELERATION: "accel"}


def lag_column(variable: Variable, order: Order, lag: int) -> str:
    return f"{_PREFIX[order]}_{variable.value.lower()}_lag{lag}"


def w_column_names() -> list[str]:
    return [
        lag_column(variable, order, d)
        for variable, order in BLOCKS
        for d in range(1, N_LAGS + 1)
    ]


def column_names() -> list[str]:
    return [*CONTROL_FIELDS, *w_column_names()]


def w_index(variable: Variable, order: Order, lag: int) -> int:
    return N_LAGS * BLOCKS.index((variable, order)) + (lag - 1)


def check_layout(found: Sequence[str]) -> None:
    expected = column_names()
    if list(found) == expected:
        return
    unmatched = sorted(set(expected) ^ set(found))
    raise LayoutError(
        f"column layout mismatch: {unmatched or 'same names, different order'}",
        unmatched=unmatched,
    )


def velocity(s: WeeklySeries) -> WeeklySeries:
    if len(s.values) < 2:
        raise InputValidationError(
            f"velocity needs at least 2 weekly values, got {len(s.values)}"
        )
    values = np.diff(s.as_array())
    return s.model_copy(update={"start_week": s.start_week + 1, "values": values.tolist()})


def acceleration(s: WeeklySeries) -> WeeklySeries:
    if len(s.values) < 3:
        raise InputValidationError(
            f"acceleration needs at least 3 weekly values, got {len(s.values)}"
        )
    return velocity(velocity(s))


def _require_weeks(s: WeeklySeries, first: int, last: int) -> None:
    missing = [w for w in range(first, last + 1) if w < s.start_week or w > s.end_week]
    if missing:
        raise CoverageError(
            f"plot {s.plot_id} {s.variable.value}: missing week {missing[0]} "
            f"(covered {s.start_week}..{s.end_week})",
            plot_id=s.plot_id,
            weeks=missing,
        )


def lag_window(s: WeeklySeries, T: int) -> np.ndarray:
    """Values at weeks T-1, T-2, ..., T-12."""
    _require_weeks(s, T - N_LAGS, T - 1)
    values = s.as_array()
    idx = [T - d - s.start_week for d in range(1, N_LAGS + 1)]
    return values[idx]


def assemble_covariates(
    z: ControlVector,
    ndvi: WeeklySeries,
    prec: WeeklySeries,
    temp: WeeklySeries,
    T: int,
) -> FeatureVector:
    series = {Variable.NDVI: ndvi, Variable.PREC: prec, Variable.TEMP: temp}
    for s in series.values():
        _require_weeks(s, T - N_LAGS - 2, T)
    blocks: list[np.ndarray] = []
    for variable, order in BLOCKS:
        s = series[variable]
        derived = velocity(s) if order is Order.VELOCITY else acceleration(s)
        blocks.append(lag_window(derived, T))
    w = np.concatenate(blocks)
    return FeatureVector(z=z, w=w.tolist())


def _plot_row(plot: PlotRecord, weekly: WeeklyStore) -> FeatureVector | SkipRecord:
    missing = [v.value for v in Variable if (plot.id, v) not in weekly]
    if missing:
        return SkipRecord(plot_id=plot.id, reason=f"missing series {','.join(missing)}")
    try:
        return assemble_covariates(
            plot.controls,
            weekly[(plot.id, Variable.NDVI)],
            weekly[(plot.id, Variable.PREC)],
            weekly[(plot.id, Variable.TEMP)],
            plot.harvest_week,
        )
    except CoverageError as exc:
        return SkipRecord(plot_id=plot.id, reason=str(exc))


def build_dataset(
    plots: Sequence[PlotRecord], weekly: WeeklyStore, *, threads: int = 1
) -> FeaturizeResult:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            # map() yields in submission order
            outcomes = list(pool.map(lambda p: _plot_row(p, weekly), plots))
    else:
        outcomes = [_plot_row(p, weekly) for p in plots]

    rows: list[np.ndarray] = []
    y: list[float] = []
    plot_ids: list[int] = []
    skipped: list[SkipRecord] = []
    for plot, outcome in zip(plots, outcomes, strict=True):
        if isinstance(outcome, SkipRecord):
            logger.info(f"skipping plot {plot.id}: {outcome.reason}")
            skipped.append(outcome)
            continue
        row = outcome.as_array()
        if not np.all(np.isfinite(row)):
            skipped.append(SkipRecord(plot_id=plot.id, reason="non-finite covariates"))
            continue
        rows.append(row)
        y.append(plot.yield_t_ha)
        plot_ids.append(plot.id)

    columns = column_names()
    X = np.vstack(rows) if rows else np.empty((0, len(columns)))
    dataset = Dataset(X=X, y=np.asarray(y, dtype=float), plot_ids=plot_ids, columns=columns)
    logger.info(f"assembled {len(dataset)} rows, skipped {len(skipped)} plots")
    return FeaturizeResult(dataset=dataset, skipped=skipped)
