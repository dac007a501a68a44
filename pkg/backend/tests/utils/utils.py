import numpy as np

from app.models import (
    ControlVector,
    Order,
    PlantedEffect,
    PlotRecord,
    SynthConfig,
    Variable,
    WeeklySeries,
)


def random_generator(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)


def random_design(
    g: np.random.Generator, n: int, p: int, *, noise: float = 0.5
) -> tuple[np.ndarray, np.ndarray]:
    X = g.standard_normal((n, p)) * g.uniform(0.5, 3.0, size=p) + g.uniform(-2, 2, size=p)
    beta = g.standard_normal(p) * (g.random(p) < 0.5)
    y = 1.5 + X @ beta + noise * g.standard_normal(n)
    return X, y


def random_knots(g: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    t = np.cumsum(g.uniform(0.5, 20.0, size=n)) + g.uniform(-100, 100)
    y = g.standard_normal(n) * 3.0
    return t, y


def weekly(
    values: list[float] | np.ndarray,
    *,
    start_week: int = 0,
    plot_id: int = 1,
    variable: Variable = Variable.NDVI,
) -> WeeklySeries:
    return WeeklySeries(
        plot_id=plot_id,
        variable=variable,
        start_week=start_week,
        values=[float(v) for v in values],
    )


def controls(**overrides: int) -> ControlVector:
    codes = {
        "p204_tipo": 1,
        "p206_ini": 2500,
        "p208": 2,
        "p211_1": 0,
        "p211_2": 1,
        "p211_4": 0,
        "p212": 3,
        "p213": 4,
        "p214": 1,
    }
    codes.update(overrides)
    return ControlVector(**codes)


def plot_record(plot_id: int, harvest_week: int, yield_t_ha: float = 5.0) -> PlotRecord:
    return PlotRecord(
        id=plot_id,
        year=2018,
        ccdd=1,
        ccpp=2,
        ccdi=3,
        congl=5198,
        lat=-5.676,
        lon=-78.438,
        harvest_week=harvest_week,
        yield_t_ha=yield_t_ha,
        controls=controls(p206_ini=harvest_week - 1),
    )


PLANTED = [
    PlantedEffect(variable=Variable.NDVI, order=Order.VELOCITY, lag=8, coefficient=1.0),
    PlantedEffect(variable=Variable.TEMP, order=Order.VELOCITY, lag=11, coefficient=-1.0),
    PlantedEffect(variable=Variable.PREC, order=Order.ACCELERATION, lag=3, coefficient=0.7),
]


def synth_config(
    n_plots: int = 60, *, seed: int = 7, noise_sd: float = 0.3, planted: bool = True
) -> SynthConfig:
    return SynthConfig(
        n_plots=n_plots,
        seed=seed,
        noise_sd=noise_sd,
        planted=PLANTED if planted else [],
    )
