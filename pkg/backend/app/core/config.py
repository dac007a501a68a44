from typing import Annotated, Any, Literal

import numpy as np
from pydantic import BeforeValidator, HttpUrl, computed_field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict
from typing_extensions import Self


def parse_int_list(v: Any) -> list[int] | Any:
    if isinstance(v, str) and not v.startswith("["):
        return [int(i.strip()) for i in v.split(",") if i.strip()]
    return v


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_ignore_empty=True,
        extra="ignore",
    )
    PROJECT_NAME: str = "yield-lags"
    ENVIRONMENT: Literal["local", "staging", "production"] = "local"
    LOG_LEVEL: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    SENTRY_DSN: HttpUrl | None = None
    # Asserts the elastic-net objective never increases between sweeps
    DEBUG: bool = False

    SEED: int = 42
    THREADS: int = 1
    # 17 significant digits round-trip every float64
    FLOAT_FORMAT: str = "%.17g"

    ENET_ALPHA: float = 0.02
    ENET_TOL: float = 1e-7
    ENET_MAX_SWEEPS: int = 10_000
    ENET_N_LAMBDAS: int = 100
    ENET_LAMBDA_RATIO: float = 1e-4
    ENET_CV_FOLDS: int = 5
    ACTIVE_LAG_TOL: float = 1e-8

    GBT_GAMMA: float = 0.1
    GBT_LAMBDA: float = 0.6
    GBT_MAX_DEPTH: int = 5
    GBT_LEARNING_RATE: float = 0.1
    GBT_CV_FOLDS: int = 3
    GBT_ROUNDS_GRID: Annotated[list[int] | str, BeforeValidator(parse_int_list)] = list(
        range(50, 501, 50)
    )

    @computed_field  # type: ignore[prop-decorator]
    @property
    def gbt_rounds_grid(self) -> list[int]:
        if isinstance(self.GBT_ROUNDS_GRID, str):
            return [int(self.GBT_ROUNDS_GRID)]
        return sorted(self.GBT_ROUNDS_GRID)

    # Depths tried when eval and cv calibrate the boosted trees
    GBT_DEPTH_GRID: Annotated[list[int] | str, BeforeValidator(parse_int_list)] = [1, 2, 3, 5]

    @computed_field  # type: ignore[prop-decorator]
    @property
    def gbt_depth_grid(self) -> list[int]:
        if isinstance(self.GBT_DEPTH_GRID, str):
            return [int(self.GBT_DEPTH_GRID)]
        return sorted(self.GBT_DEPTH_GRID)

    GAM_RANK: int = 5
    GAM_MIN_ROWS: int = 30
    GAM_LAMBDA_GRID_MIN: float = 1e-4
    GAM_LAMBDA_GRID_MAX: float = 1e8
    GAM_LAMBDA_GRID_SIZE: int = 25

    TRAIN_RATIO: float = 0.8

    @computed_field  # type: ignore[prop-decorator]
    @property
    def gam_lambda_grid(self) -> list[float]:
        grid = np.geomspace(
            self.GAM_LAMBDA_GRID_MIN,
            self.GAM_LAMBDA_GRID_MAX,
            self.GAM_LAMBDA_GRID_SIZE,
        )
        return [float(v) for v in grid]

    @model_validator(mode="after")
    def _check_ranges(self) -> Self:
        if not 0.0 <= self.ENET_ALPHA <= 1.0:
            raise ValueError(f"ENET_ALPHA must lie in [0, 1], got {self.ENET_ALPHA}")
        if not 0.0 < self.TRAIN_RATIO < 1.0:
            raise ValueError(f"TRAIN_RATIO must lie in (0, 1), got {self.TRAIN_RATIO}")
        if not 0.0 < self.GBT_LEARNING_RATE <= 1.0:
            raise ValueError(
                f"GBT_LEARNING_RATE must lie in (0, 1], got {self.GBT_LEARNING_RATE}"
            )
        if self.THREADS < 1:
            raise ValueError(f"THREADS must be at least 1, got {self.THREADS}")
        if self.GAM_RANK < 3:
            raise ValueError(f"GAM_RANK must be at least 3, got {self.GAM_RANK}")
        return self


settings = Settings()
