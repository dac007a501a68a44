import json
import logging
import os
import tempfile
from collections.abc import Iterable
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import BaseModel, TypeAdapter, ValidationError

from app.core.config import settings
from app.core.exceptions import InputValidationError
from app.models import (
    CvCurve,
    DataSplit,
    Dataset,
    FittedModel,
    GbtGridPoint,
    LagReport,
    MseRow,
    SkipRecord,
    Variable,
    WeeklySeries,
)

logger = logging.getLogger(__name__)

WEEKLY_COLUMNS = ["plot_id", "variable", "week", "value"]

_fitted_model_adapter: TypeAdapter[Any] = TypeAdapter(FittedModel)


def atomic_write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    logger.info(f"wrote {path}")
    return path


def write_frame(*, frame: pd.DataFrame, path: Path) -> Path:
    text = frame.to_csv(
        index=False, float_format=settings.FLOAT_FORMAT, lineterminator="\n"
    )
    return atomic_write_text(path, text)


def write_json(*, model: BaseModel, path: Path) -> Path:
    return atomic_write_text(path, model.model_dump_json(indent=2, by_alias=True) + "\n")


def read_frame(*, path: Path, columns: list[str]) -> pd.DataFrame:
    if not path.is_file():
        raise InputValidationError(f"input file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise InputValidationError(f"{path}: empty file, header expected")
    if list(frame.columns) != columns:
        raise InputValidationError(
            f"{path}: header {list(frame.columns)} does not match {columns}"
        )
    return frame


# ==================== Weekly series ====================


def write_weekly(*, series: Iterable[WeeklySeries], path: Path) -> Path:
    rows: list[tuple[int, str, int, float]] = []
    for s in series:
        rows.extend(
            (s.plot_id, s.variable.value, s.start_week + k, v)
            for k, v in enumerate(s.values)
        )
    frame = pd.DataFrame(rows, columns=WEEKLY_COLUMNS)
    return write_frame(frame=frame, path=path)


def read_weekly(*, path: Path) -> dict[tuple[int, Variable], WeeklySeries]:
    frame = read_frame(path=path, columns=WEEKLY_COLUMNS)
    store: dict[tuple[int, Variable], WeeklySeries] = {}
    if frame.empty:
        return store
    try:
        frame = frame.astype({"plot_id": int, "week": int, "value": float})
    except ValueError as exc:
        raise InputValidationError(f"{path}: {exc}")
    for (plot_id, variable), group in frame.groupby(["plot_id", "variable"], sort=True):
        try:
            kind = Variable(variable)
        except ValueError:
            raise InputValidationError(f"{path}: unknown variable {variable!r}")
        group = group.sort_values("week")
        weeks = group["week"].to_numpy()
        if np.any(np.diff(weeks) != 1):
            raise InputValidationError(
                f"{path}: weekly series for plot {plot_id} {kind.value} has gaps"
            )
        store[(int(plot_id), kind)] = WeeklySeries(
            plot_id=int(plot_id),
            variable=kind,
            start_week=int(weeks[0]),
            values=[float(v) for v in group["value"]],
        )
    return store


# ==================== Dataset ====================


def write_dataset(*, dataset: Dataset, path: Path) -> Path:
    frame = pd.DataFrame(dataset.X, columns=dataset.columns)
    frame.insert(0, "plot_id", dataset.plot_ids)
    frame[dataset.response] = dataset.y
    return write_frame(frame=frame, path=path)


def read_dataset(*, path: Path, columns: list[str]) -> Dataset:
    expected = ["plot_id", *columns, "prod_hect"]
    frame = read_frame(path=path, columns=expected)
    try:
        X = frame[columns].to_numpy(dtype=float).reshape(len(frame), len(columns))
        y = frame["prod_hect"].to_numpy(dtype=float)
        plot_ids = [int(v) for v in frame["plot_id"]]
    except ValueError as exc:
        raise InputValidationError(f"{path}: {exc}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InputValidationError(f"{path}: non-finite values in dataset")
    return Dataset(X=X, y=y, plot_ids=plot_ids, columns=list(columns))


def write_skipped(*, skipped: list[SkipRecord], path: Path) -> Path:
    frame = pd.DataFrame(
        [(s.plot_id, s.reason) for s in skipped], columns=["plot_id", "reason"]
    )
    return write_frame(frame=frame, path=path)


# ==================== Models and evaluation ====================


def write_model(*, model: BaseModel, path: Path) -> Path:
    # Tree nodes carry either a split or a leaf weight, never both
    text = model.model_dump_json(indent=2, by_alias=True, exclude_none=True)
    return atomic_write_text(path, text + "\n")


def read_model(*, path: Path) -> Any:
    if not path.is_file():
        raise InputValidationError(f"input file not found: {path}")
    try:
        return _fitted_model_adapter.validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise InputValidationError(f"{path}: not a fitted model file: {exc}")


def write_cv_curve(*, curve: CvCurve, path: Path) -> Path:
    frame = pd.DataFrame(
        {
            curve.parameter: curve.grid,
            "mean_mse": curve.mean_mse,
            "stderr_mse": curve.stderr_mse,
        }
    )
    return write_frame(frame=frame, path=path)


def write_cv_grid(*, points: list[GbtGridPoint], path: Path) -> Path:
    frame = pd.DataFrame(
        [p.model_dump(by_alias=True) for p in points],
        columns=["gamma", "lambda", "max_depth", "n_rounds", "mean_mse", "stderr_mse"],
    )
    return write_frame(frame=frame, path=path)


def write_split(*, split: DataSplit, path: Path) -> Path:
    return write_json(model=split, path=path)


def write_mse_table(*, rows: list[MseRow], path: Path) -> Path:
    frame = pd.DataFrame(
        [r.model_dump() for r in rows], columns=["model", "train", "validation"]
    )
    return write_frame(frame=frame, path=path)


# ==================== Lag report ====================


def write_lag_report(*, report: LagReport, json_path: Path, csv_path: Path) -> list[Path]:
    rows = [
        (p.variable.value, p.order.value, c.lag, c.coef_std, c.coef_raw, c.active)
        for p in report.profiles
        for c in p.cells
    ]
    frame = pd.DataFrame(
        rows, columns=["variable", "order", "lag", "coef_std", "coef_raw", "active"]
    )
    return [
        write_json(model=report, path=json_path),
        write_frame(frame=frame, path=csv_path),
    ]


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)

