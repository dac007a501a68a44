"""
Synthetic plots with planted lag effects.

Series follow baseline + seasonal sine (52-week period) + AR(1) noise at each
variable's native cadence; yields are linear in standardized lag features.
The dataset is produced by the same interpolation and featurization code the
real pipeline runs.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.signal import lfilter

from app.core import rng
from app.core.exceptions import ConfigError
from app.models import (
    CONTROL_FIELDS,
    ControlVector,
    Dataset,
    LagReport,
    PlantedEffect,
    PlotRecord,
    RawSeries,
    SynthConfig,
    SynthTruth,
    Variable,
)
from app.services import features, timeseries
from app.services.ingest import week_index, week_start_day

logger = logging.getLogger(__name__)

CADENCE_DAYS = {Variable.NDVI: 16, Variable.PREC: 5, Variable.TEMP: 1}
SEASON_DAYS = 52 * 7
# Harvest sits this many weeks before the last generated week
HARVEST_MARGIN = 2

_VARIABLE_KEY = {v: i for i, v in enumerate(Variable)}
_CONTROL_KEY = len(_VARIABLE_KEY)


def ar1_noise(n: int, rho: float, sd: float, generator: np.random.Generator) -> np.ndarray:
    """Stationary AR(1): e[k] = rho * e[k-1] + N(0, sd^2), started from its stationary law."""
    if not -1 < rho < 1:
        raise ConfigError(f"AR(1) coefficient must lie in (-1, 1), got {rho}")
    shocks = generator.standard_normal(n) * sd
    if n == 0:
        return shocks
    shocks[0] /= math.sqrt(1.0 - rho * rho)
    return np.asarray(lfilter([1.0], [1.0, -rho], shocks))


def first_week(cfg: SynthConfig) -> int:
    return week_index(cfg.start_date)


def harvest_week(cfg: SynthConfig, plot_id: int) -> int:
    jitter = int(
        rng.stream(cfg.seed, rng.PLOT_STREAM, plot_id, _CONTROL_KEY).integers(
            0, cfg.harvest_jitter + 1
        )
    )
    return first_week(cfg) + cfg.weeks - 1 - HARVEST_MARGIN - jitter


def generate_series(cfg: SynthConfig, plot_id: int, variable: Variable) -> RawSeries:
    params = cfg.series[variable]
    cadence = CADENCE_DAYS[variable]
    start = week_start_day(first_week(cfg))
    end = week_start_day(first_week(cfg) + cfg.weeks - 1)
    n_points = math.ceil((end - start) / cadence) + 1
    days = start + cadence * np.arange(n_points)
    generator = rng.stream(cfg.seed, rng.PLOT_STREAM, plot_id, _VARIABLE_KEY[variable])
    noise = ar1_noise(n_points, params.rho, params.innovation_sd, generator)
    values = (
        params.baseline
        + params.amplitude * np.sin(2.0 * np.pi * days / SEASON_DAYS)
        + noise
    )
    if variable is Variable.NDVI:
        values = np.clip(values, -1.0, 1.0)
    elif variable is Variable.PREC:
        values = np.maximum(values, 0.0)
    return RawSeries(
        plot_id=plot_id,
        variable=variable,
        timestamps=[float(d) for d in days],
        values=values.tolist(),
    )


def generate_plot(cfg: SynthConfig, plot_id: int) -> PlotRecord:
    """Plot record with yield 0; yields are filled in by generate_dataset."""
    g = rng.stream(cfg.seed, rng.PLOT_STREAM, plot_id, _CONTROL_KEY + 1)
    T = harvest_week(cfg, plot_id)
    codes = {
        "p204_tipo": int(g.integers(1, 3)),
        "p206_ini": T - int(g.integers(0, 3)),
        "p208": int(g.integers(1, 4)),
        "p211_1": int(g.integers(0, 2)),
        "p211_2": int(g.integers(0, 2)),
        "p211_4": int(g.integers(0, 2)),
        "p212": int(g.integers(1, 8)),
        "p213": int(g.integers(1, 9)),
        "p214": int(g.integers(1, 3)),
    }
    return PlotRecord(
        id=plot_id,
        year=cfg.start_date.year,
        ccdd=int(g.integers(1, 26)),
        ccpp=int(g.integers(1, 11)),
        ccdi=int(g.integers(1, 21)),
        congl=int(g.integers(1, 10_000)),
        lat=float(np.round(g.uniform(-18.0, 0.0), 6)),
        lon=float(np.round(g.uniform(-81.0, -69.0), 6)),
        harvest_week=T,
        yield_t_ha=0.0,
        controls=ControlVector(**codes),
    )


def _generate_plot_bundle(
    cfg: SynthConfig, plot_id: int
) -> tuple[PlotRecord, list[RawSeries]]:
    return generate_plot(cfg, plot_id), [
        generate_series(cfg, plot_id, v) for v in Variable
    ]


def _generate_raw(
    cfg: SynthConfig, threads: int
) -> tuple[list[PlotRecord], list[RawSeries]]:
    ids = list(range(1, cfg.n_plots + 1))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            bundles = list(pool.map(lambda i: _generate_plot_bundle(cfg, i), ids))
    else:
        bundles = [_generate_plot_bundle(cfg, i) for i in ids]
    plots = [p for p, _ in bundles]
    series = [s for _, group in bundles for s in group]
    return plots, series


def _truth(cfg: SynthConfig, dataset: Dataset) -> tuple[SynthTruth, np.ndarray]:
    columns = features.column_names()
    n_controls = len(CONTROL_FIELDS)
    mean = dataset.X.mean(axis=0) if len(dataset) else np.zeros(len(columns))
    sd = dataset.X.std(axis=0) if len(dataset) else np.ones(len(columns))
    beta_std = np.zeros(len(columns))
    for effect in cfg.planted:
        idx = n_controls + features.w_index(effect.variable, effect.order, effect.lag)
        if sd[idx] == 0:
            raise ConfigError(f"planted column {columns[idx]} has zero variance")
        beta_std[idx] += effect.coefficient
    active = beta_std != 0
    beta_raw = np.zeros(len(columns))
    beta_raw[active] = beta_std[active] / sd[active]
    beta0_raw = cfg.beta0 - float(np.sum(beta_raw * mean))
    truth = SynthTruth(
        planted=cfg.planted,
        column_names=columns,
        beta0=cfg.beta0,
        beta_std=beta_std.tolist(),
        beta0_raw=beta0_raw,
        beta_raw=beta_raw.tolist(),
        noise_sd=cfg.noise_sd,
    )
    safe_sd = np.where(active, sd, 1.0)
    signal = ((dataset.X - mean) / safe_sd) @ beta_std if len(dataset) else np.zeros(0)
    return truth, signal


def generate_dataset(cfg: SynthConfig, *, threads: int = 1) -> tuple[Dataset, SynthTruth]:
    dataset, truth, _, _ = _simulate(cfg, threads=threads)
    return dataset, truth


def _simulate(
    cfg: SynthConfig, *, threads: int
) -> tuple[Dataset, SynthTruth, list[PlotRecord], list[RawSeries]]:
    plots, series = _generate_raw(cfg, threads)
    weekly = {(w.plot_id, w.variable): w for w in timeseries.interpolate_all(series)}
    result = features.build_dataset(plots, weekly, threads=threads)
    if result.skipped:
        first = result.skipped[0]
        raise ConfigError(
            f"{len(result.skipped)} synthetic plots failed coverage "
            f"(plot {first.plot_id}: {first.reason})"
        )
    base = result.dataset
    truth, signal = _truth(cfg, base)
    noise = rng.stream(cfg.seed, rng.YIELD_STREAM).standard_normal(len(base)) * cfg.noise_sd
    y = cfg.beta0 + signal + noise
    if np.any(y < 0):
        raise ConfigError(
            f"{int(np.sum(y < 0))} synthetic yields are negative; raise beta0 "
            f"(currently {cfg.beta0})"
        )
    dataset = Dataset(X=base.X, y=y, plot_ids=base.plot_ids, columns=base.columns)
    by_id = dict(zip(dataset.plot_ids, y.tolist(), strict=True))
    plots = [p.model_copy(update={"yield_t_ha": by_id[p.id]}) for p in plots]
    logger.info(
        f"simulated {len(plots)} plots, {len(cfg.planted)} planted effects, "
        f"noise sd {cfg.noise_sd}"
    )
    return dataset, truth, plots, series


def simulate_files(
    cfg: SynthConfig, *, threads: int = 1
) -> tuple[list[PlotRecord], list[RawSeries], SynthTruth]:
    _, truth, plots, series = _simulate(cfg, threads=threads)
    return plots, series, truth


def recovery_score(report: LagReport, truth: list[PlantedEffect]) -> float:
    if not truth:
        return 1.0
    found = 0
    for effect in truth:
        cell = report.profile(effect.variable, effect.order).cells[effect.lag - 1]
        if cell.active and cell.sign == int(np.sign(effect.coefficient)):
            found += 1
    return found / len(truth)
