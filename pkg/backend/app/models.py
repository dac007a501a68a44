import math
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from itertools import pairwise
from typing import Annotated, Any, Literal

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeInt,
    PositiveInt,
    PrivateAttr,
    computed_field,
    field_validator,
    model_validator,
)
from typing_extensions import Self


class Variable(str, Enum):
    NDVI = "NDVI"
    PREC = "PREC"
    TEMP = "TEMP"


class Order(str, Enum):
    VELOCITY = "velocity"
    ACCELERATION = "acceleration"


# ==================== Plot records ====================

CONTROL_FIELDS: tuple[str, ...] = (
    "p204_tipo",
    "p206_ini",
    "p208",
    "p211_1",
    "p211_2",
    "p211_4",
    "p212",
    "p213",
    "p214",
)


# Agronomic controls z_i, integer coded
class ControlVector(BaseModel):
    model_config = ConfigDict(frozen=True)

    p204_tipo: int = Field(ge=1, le=2)  # 1 homogeneous, 2 heterogeneous
    p206_ini: int  # harvest start, week index
    p208: int = Field(ge=1, le=3)
    p211_1: int = Field(ge=0, le=1)
    p211_2: int = Field(ge=0, le=1)
    p211_4: int = Field(ge=0, le=1)
    p212: int = Field(ge=1, le=7)  # water source
    p213: int = Field(ge=1, le=8)  # irrigation system
    p214: int = Field(ge=1, le=2)  # seed certified or not

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in CONTROL_FIELDS], dtype=float)


class PlotRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: PositiveInt
    year: int = Field(ge=1, le=9999)
    ccdd: NonNegativeInt
    ccpp: NonNegativeInt
    ccdi: NonNegativeInt
    congl: NonNegativeInt
    lat: float = Field(ge=-90, le=90)
    lon: float = Field(ge=-180, le=180)
    harvest_week: int
    yield_t_ha: float = Field(ge=0, allow_inf_nan=False)
    controls: ControlVector


# ==================== Series ====================


class RawSeries(BaseModel):
    """Irregular native-cadence series; timestamps are days since 1970-01-01."""

    model_config = ConfigDict(frozen=True)

    plot_id: int
    variable: Variable
    timestamps: list[float]
    values: list[float]

    @model_validator(mode="after")
    def _check_points(self) -> Self:
        if len(self.timestamps) != len(self.values):
            raise ValueError("timestamps and values differ in length")
        if len(self.timestamps) < 4:
            raise ValueError(
                f"plot {self.plot_id} {self.variable.value}: "
                f"{len(self.timestamps)} points, at least 4 required"
            )
        if any(b <= a for a, b in pairwise(self.timestamps)):
            raise ValueError(
                f"plot {self.plot_id} {self.variable.value}: "
                "timestamps must be strictly increasing"
            )
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError(f"plot {self.plot_id}: non-finite value")
        if self.variable is Variable.NDVI and any(abs(v) > 1.0 for v in self.values):
            raise ValueError(f"plot {self.plot_id}: NDVI value outside [-1, 1]")
        return self


class SplineModel(BaseModel):
    """Natural cubic spline: knot values plus second derivatives at the knots."""

    model_config = ConfigDict(frozen=True)

    knots: list[float]
    values: list[float]
    second_derivatives: list[float]
    plot_id: int | None = None
    variable: Variable | None = None


class WeeklySeries(BaseModel):
    model_config = ConfigDict(frozen=True)

    plot_id: int
    variable: Variable
    start_week: int
    values: list[float]

    @property
    def end_week(self) -> int:
        """Last covered week (inclusive)."""
        return self.start_week + len(self.values) - 1

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


# ==================== Features ====================


class FeatureVector(BaseModel):
    model_config = ConfigDict(frozen=True)

    z: ControlVector
    # 6 blocks of 12 lags: VEL_NDVI, ACCEL_NDVI, VEL_PREC, ACCEL_PREC, VEL_TEMP, ACCEL_TEMP
    w: list[float] = Field(min_length=72, max_length=72)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.z.as_array(), np.asarray(self.w, dtype=float)])


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    plot_ids: list[int]
    columns: list[str]
    response: str = "prod_hect"

    def __len__(self) -> int:
        return len(self.plot_ids)

    def subset(self, idx: np.ndarray | list[int]) -> "Dataset":
        rows = np.asarray(idx, dtype=int)
        return Dataset(
            X=self.X[rows],
            y=self.y[rows],
            plot_ids=[self.plot_ids[i] for i in rows],
            columns=list(self.columns),
            response=self.response,
        )


class SkipRecord(BaseModel):
    plot_id: int
    reason: str


@dataclass
class FeaturizeResult:
    dataset: Dataset
    skipped: list[SkipRecord] = field(default_factory=list)


# ==================== Elastic net ====================


class EnetConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    alpha: float = Field(default=0.02, ge=0, le=1)
    lambda_: float = Field(default=0.0, ge=0, alias="lambda")
    tol: float = Field(default=1e-7, gt=0)
    max_sweeps: int = Field(default=10_000, ge=1)
    standardize: bool = True


class EnetModel(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    kind: Literal["enet"] = "enet"
    alpha: float
    lambda_: float = Field(alias="lambda")
    beta0: float
    beta: list[float]
    column_names: list[str]
    kkt_residual: float
    n_sweeps: int
    standardized: bool
    # Coefficients on the solver scale (unit-variance columns)
    beta_std: list[float]
    x_mean: list[float]
    x_scale: list[float]
    dropped_columns: list[str] = []


# ==================== Boosted trees ====================


class GbtConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    gamma: float = Field(default=0.1, ge=0)
    lambda_: float = Field(default=0.6, ge=0, alias="lambda")
    max_depth: int = Field(default=5, ge=0)
    n_rounds: int = Field(default=100, ge=0)
    learning_rate: float = Field(default=0.1, gt=0, le=1)
    base_score: float | None = None


class TreeNode(BaseModel):
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    leaf_weight: float | None = None

    @property
    def is_leaf(self) -> bool:
        return self.leaf_weight is not None


class Tree(BaseModel):
    root: TreeNode
    n_leaves: int
    depth: int
    _flat: Any = PrivateAttr(default=None)


class TreeEnsemble(BaseModel):
    kind: Literal["gbt"] = "gbt"
    base_score: float
    learning_rate: float
    config: GbtConfig
    column_names: list[str]
    trees: list[Tree] = []
    train_mse: list[float] = []


# ==================== Additive model ====================


class SmoothTerm(BaseModel):
    feature: int  # index into w (0..71)
    column: str
    kind: Literal["spline", "linear", "dropped"]
    knots: list[float] = []
    # Maps the constrained coefficients back to the knot-value basis (R x m)
    transform: list[list[float]] = []
    coef: list[float] = []
    center: float = 0.0
    # Linear direction removed as aliased; EDF then lies in [0, R - 2]
    linear_aliased: bool = False
    # 0 for dropped terms, otherwise in [1, R] unless linear_aliased
    edf: float = 0.0


class GamModel(BaseModel):
    kind: Literal["gam"] = "gam"
    theta0: float
    theta: list[float]
    smooths: list[SmoothTerm]
    smoothing: float
    gcv_score: float
    rank: int
    column_names: list[str]
    dropped_controls: list[str] = []
    fitted: list[float] = []

    @computed_field  # type: ignore[prop-decorator]
    @property
    def edf_table(self) -> dict[str, float]:
        return {term.column: term.edf for term in self.smooths}


FittedModel = Annotated[EnetModel | TreeEnsemble | GamModel, Field(discriminator="kind")]


# ==================== Evaluation ====================


class CvCurve(BaseModel):
    parameter: str = "lambda"
    grid: list[float]
    mean_mse: list[float]
    stderr_mse: list[float]
    n_folds: int
    seed: int

    @model_validator(mode="after")
    def _check_lengths(self) -> Self:
        if not len(self.grid) == len(self.mean_mse) == len(self.stderr_mse):
            raise ValueError("curve arrays differ in length")
        if any(s < 0 for s in self.stderr_mse):
            raise ValueError("negative standard error")
        return self


class GbtGridPoint(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    gamma: float
    lambda_: float = Field(alias="lambda")
    max_depth: int
    n_rounds: int
    mean_mse: float
    stderr_mse: float


class DataSplit(BaseModel):
    seed: int
    ratio: float
    train: list[int]
    test: list[int]


class MseRow(BaseModel):
    model: str
    train: float
    validation: float


# ==================== Lag report ====================


class LagCell(BaseModel):
    lag: int
    coef_std: float
    coef_raw: float
    active: bool
    sign: int


class LagProfile(BaseModel):
    variable: Variable
    order: Order
    cells: list[LagCell] = Field(min_length=12, max_length=12)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def density(self) -> float:
        return sum(cell.active for cell in self.cells) / len(self.cells)


class LagReport(BaseModel):
    active_tol: float
    profiles: list[LagProfile]

    def profile(self, variable: Variable, order: Order) -> LagProfile:
        for p in self.profiles:
            if p.variable is variable and p.order is order:
                return p
        raise KeyError(f"no profile for {variable.value}/{order.value}")


# ==================== Synthetic data ====================


class PlantedEffect(BaseModel):
    variable: Variable
    order: Order
    lag: int = Field(ge=1, le=12)
    coefficient: float

    @field_validator("coefficient")
    @classmethod
    def _nonzero(cls, v: float) -> float:
        if v == 0 or not math.isfinite(v):
            raise ValueError("planted coefficient must be finite and non-zero")
        return v


class SeriesParams(BaseModel):
    baseline: float
    amplitude: float
    rho: float = Field(gt=-1, lt=1)
    innovation_sd: float = Field(ge=0)


def default_series_params() -> dict[Variable, SeriesParams]:
    return {
        Variable.NDVI: SeriesParams(baseline=0.55, amplitude=0.2, rho=0.5, innovation_sd=0.05),
        Variable.PREC: SeriesParams(baseline=80.0, amplitude=40.0, rho=0.3, innovation_sd=15.0),
        Variable.TEMP: SeriesParams(baseline=26.0, amplitude=3.0, rho=0.6, innovation_sd=1.0),
    }


class SynthConfig(BaseModel):
    n_plots: NonNegativeInt = 348
    weeks: int = Field(default=40, ge=30)
    seed: int = 42
    planted: list[PlantedEffect] = []
    noise_sd: float = Field(default=0.3, ge=0)
    beta0: float = 10.0
    start_date: date = date(2018, 1, 1)
    harvest_jitter: NonNegativeInt = 8
    series: dict[Variable, SeriesParams] = Field(default_factory=default_series_params)

    @model_validator(mode="after")
    def _check_window(self) -> Self:
        if self.harvest_jitter > self.weeks - 17:
            raise ValueError(
                f"harvest_jitter={self.harvest_jitter} leaves fewer than 14 lag weeks "
                f"inside a {self.weeks}-week series"
            )
        missing = set(Variable) - set(self.series)
        if missing:
            raise ValueError(f"series parameters missing for {sorted(v.value for v in missing)}")
        return self


class SynthTruth(BaseModel):
    planted: list[PlantedEffect]
    column_names: list[str]
    beta0: float
    beta_std: list[float]
    beta0_raw: float
    beta_raw: list[float]
    noise_sd: float


# ==================== Runs ====================


class RunManifest(BaseModel):
    command: str
    inputs: dict[str, str]
    config_hash: str
    seed: int
    threads: int
    tool_version: str
    outputs: list[str]
    wall_clock_seconds: float


TreeNode.model_rebuild()
