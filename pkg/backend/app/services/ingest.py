"""
Plot-table and remote-sensing series ingestion, plus the band formulas for
NDVI and split-window land surface temperature.
"""
import logging
import math
from collections import defaultdict
from collections.abc import Iterable
from datetime import date, timedelta
from itertools import pairwise
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike
from pydantic import ValidationError

from app.core.exceptions import InputValidationError, UndefinedInputError
from app.models import CONTROL_FIELDS, PlotRecord, RawSeries, Variable
from app.storage import read_frame, write_frame

logger = logging.getLogger(__name__)

PLOT_COLUMNS = [
    "id",
    "year",
    "ccdd",
    "ccpp",
    "ccdi",
    "congl",
    "lat",
    "lon",
    "harvest_week",
    "yield_t_ha",
    *CONTROL_FIELDS,
]
SERIES_COLUMNS = ["plot_id", "variable", "date", "value"]

EPOCH = date(1970, 1, 1)
# Monday of ISO week 1970-W01
WEEK_EPOCH = date(1969, 12, 29)


class SplitWindowCoefficients(NamedTuple):
    a: float
    b: float
    c: float
    d: float


def day_number(d: date) -> int:
    return (d - EPOCH).days


def day_to_date(day: float) -> date:
    if day != int(day):
        raise InputValidationError(f"timestamp {day} is not a whole day")
    return EPOCH + timedelta(days=int(day))


def week_index(d: date) -> int:
    """ISO-week index counted from 1970-W01 (week 0)."""
    return (d - WEEK_EPOCH).days // 7


def week_start_day(week: int) -> int:
    """Days since 1970-01-01 of the Monday 00:00 opening `week`."""
    return 7 * week - 3


def compute_ndvi(nir: ArrayLike, red: ArrayLike) -> float | np.ndarray:
    nir_a = np.asarray(nir, dtype=float)
    red_a = np.asarray(red, dtype=float)
    if np.any(nir_a < 0) or np.any(red_a < 0):
        raise InputValidationError("reflectances must be non-negative")
    total = nir_a + red_a
    if np.any(total == 0):
        raise UndefinedInputError("NDVI undefined where nir + red = 0")
    ndvi = (nir_a - red_a) / total
    return float(ndvi) if ndvi.ndim == 0 else ndvi


def compute_lst_split_window(
    t31: float, t32: float, coeffs: SplitWindowCoefficients | tuple[float, float, float, float]
) -> float:
    a, b, c, d = coeffs
    if not all(math.isfinite(v) for v in (t31, t32, a, b, c, d)):
        raise InputValidationError("split-window inputs must be finite")
    if t31 <= 0 or t32 <= 0:
        raise InputValidationError("brightness temperatures must be positive kelvin")
    diff = t31 - t32
    return a + b * (t31 + t32) + c * diff + d * diff * diff


def _parse_week(raw: str, *, row: int, field: str) -> int:
    value = raw.strip()
    try:
        if "-" in value[1:]:
            return week_index(date.fromisoformat(value))
        return int(value)
    except ValueError:
        raise InputValidationError(f"cannot parse {field}={raw!r}", row=row, field=field)


def _validation_field(exc: ValidationError) -> str:
    loc = exc.errors()[0]["loc"]
    return ".".join(str(part) for part in loc)


def parse_plot_table(path: Path) -> list[PlotRecord]:
    frame = read_frame(path=path, columns=PLOT_COLUMNS)
    records: list[PlotRecord] = []
    first_row: dict[int, int] = {}
    for row_number, row in enumerate(frame.itertuples(index=False), start=1):
        raw = row._asdict()
        try:
            controls = {name: raw[name] for name in CONTROL_FIELDS}
            controls["p206_ini"] = _parse_week(
                raw["p206_ini"], row=row_number, field="p206_ini"
            )
            payload = {name: raw[name] for name in PLOT_COLUMNS if name not in CONTROL_FIELDS}
            payload["harvest_week"] = _parse_week(
                raw["harvest_week"], row=row_number, field="harvest_week"
            )
            record = PlotRecord.model_validate({**payload, "controls": controls})
        except ValidationError as exc:
            name = _validation_field(exc)
            raise InputValidationError(
                f"invalid {name}: {exc.errors()[0]['msg']}", row=row_number, field=name
            )
        if record.id in first_row:
            raise InputValidationError(
                f"duplicate plot id {record.id} (first seen in row {first_row[record.id]})",
                row=row_number,
                field="id",
            )
        first_row[record.id] = row_number
        records.append(record)
    logger.info(f"parsed {len(records)} plot records from {path}")
    return records


def write_plot_table(records: Iterable[PlotRecord], path: Path) -> Path:
    rows = []
    for r in records:
        row = r.model_dump(exclude={"controls"})
        row.update(r.controls.model_dump())
        rows.append(row)
    frame = pd.DataFrame(rows, columns=PLOT_COLUMNS)
    return write_frame(frame=frame, path=path)


def parse_series(path: Path, variable: Variable | None = None) -> list[RawSeries]:
    frame = read_frame(path=path, columns=SERIES_COLUMNS)
    points: dict[tuple[int, Variable], list[tuple[int, float]]] = defaultdict(list)
    for row_number, row in enumerate(frame.itertuples(index=False), start=1):
        try:
            kind = Variable(row.variable.strip())
            plot_id = int(row.plot_id)
            day = day_number(date.fromisoformat(row.date.strip()))
            value = float(row.value)
        except ValueError as exc:
            raise InputValidationError(f"malformed series row: {exc}", row=row_number)
        if variable is not None and kind is not variable:
            continue
        if not math.isfinite(value):
            raise InputValidationError("non-finite value", row=row_number, field="value")
        if kind is Variable.NDVI and abs(value) > 1.0:
            raise InputValidationError(
                f"NDVI value {value} outside [-1, 1]", row=row_number, field="value"
            )
        points[(plot_id, kind)].append((day, value))

    order = list(Variable)
    result: list[RawSeries] = []
    for plot_id, kind in sorted(points, key=lambda k: (k[0], order.index(k[1]))):
        pairs = sorted(points[(plot_id, kind)])
        days = [d for d, _ in pairs]
        duplicates = sorted({a for a, b in pairwise(days) if a == b})
        if duplicates:
            raise InputValidationError(
                f"plot {plot_id} {kind.value}: duplicate timestamp "
                f"{day_to_date(duplicates[0]).isoformat()}"
            )
        try:
            series = RawSeries(
                plot_id=plot_id,
                variable=kind,
                timestamps=[float(d) for d in days],
                values=[v for _, v in pairs],
            )
        except ValidationError as exc:
            raise InputValidationError(exc.errors()[0]["msg"].removeprefix("Value error, "))
        result.append(series)
    logger.info(f"parsed {len(result)} raw series from {path}")
    return result


def write_series(series: Iterable[RawSeries], path: Path) -> Path:
    rows = [
        (s.plot_id, s.variable.value, day_to_date(t).isoformat(), v)
        for s in series
        for t, v in zip(s.timestamps, s.values, strict=True)
    ]
    frame = pd.DataFrame(rows, columns=SERIES_COLUMNS)
    return write_frame(frame=frame, path=path)
