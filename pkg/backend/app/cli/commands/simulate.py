from pathlib import Path
from typing import Annotated

import typer
from pydantic import ValidationError

from app.cli.deps import InputArg, OutOpt, ThreadsOpt, run_command
from app.core.config import settings
from app.core.exceptions import ConfigError, InputValidationError
from app.models import SynthConfig
from app.services import ingest, synth
from app.storage import write_json


def load_config(path: Path, seed: int | None) -> SynthConfig:
    if not path.is_file():
        raise InputValidationError(f"input file not found: {path}")
    try:
        cfg = SynthConfig.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise ConfigError(f"{path}: invalid synthetic configuration: {exc}")
    return cfg if seed is None else cfg.model_copy(update={"seed": seed})


def simulate(
    config: InputArg,
    seed: Annotated[
        int | None, typer.Option("--seed", help="Overrides the seed in the config file.")
    ] = None,
    threads: ThreadsOpt = settings.THREADS,
    out: OutOpt = Path("."),
) -> None:
    """
    Synthetic plots with planted lag effects, written as ordinary input files.
    """
    with run_command(
        "simulate",
        seed=settings.SEED if seed is None else seed,
        threads=threads,
        out=out,
        inputs={"config": config},
    ) as ctx:
        cfg = load_config(config, seed)
        ctx.seed = cfg.seed
        ctx.config = cfg.model_dump(mode="json")
        plots, series, truth = synth.simulate_files(cfg, threads=threads)
        ctx.record(
            ingest.write_plot_table(plots, ctx.path("plots.csv")),
            ingest.write_series(series, ctx.path("series.csv")),
            write_json(model=truth, path=ctx.path("truth.json")),
        )
