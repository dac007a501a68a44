from pathlib import Path
from typing import Annotated

import typer

from app.cli.commands.fit import split_indices
from app.cli.deps import InputArg, OutOpt, SeedOpt, ThreadsOpt, parse_auto, run_command
from app.core.config import settings
from app.models import EnetConfig
from app.services import evaluation, features
from app.storage import read_dataset, write_mse_table


def evaluate(
    dataset: InputArg,
    alpha: Annotated[float, typer.Option("--alpha", min=0, max=1)] = settings.ENET_ALPHA,
    smoothing: Annotated[str, typer.Option("--smoothing")] = "auto",
    seed: SeedOpt = settings.SEED,
    threads: ThreadsOpt = settings.THREADS,
    out: OutOpt = Path("."),
) -> None:
    """
    Train/validation MSE of the elastic net, boosted trees and additive model
    on one shared split.
    """
    smooth = parse_auto(smoothing, name="--smoothing")
    with run_command(
        "eval",
        seed=seed,
        threads=threads,
        out=out,
        inputs={"dataset": dataset},
        config={
            "alpha": alpha,
            "smoothing": smoothing,
            "gbt_depths": settings.gbt_depth_grid,
            "gbt_rounds": settings.gbt_rounds_grid,
        },
    ) as ctx:
        D = read_dataset(path=dataset, columns=features.column_names())
        train, test = split_indices(ctx, D, seed)
        rows = evaluation.compare_models(
            D,
            train,
            test,
            enet_cfg=EnetConfig(
                alpha=alpha, tol=settings.ENET_TOL, max_sweeps=settings.ENET_MAX_SWEEPS
            ),
            smoothing="auto" if smooth is None else smooth,
            seed=seed,
            threads=threads,
        )
        ctx.record(write_mse_table(rows=rows, path=ctx.path("mse_table.csv")))
