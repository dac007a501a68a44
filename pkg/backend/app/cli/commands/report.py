from pathlib import Path
from typing import Annotated

import typer

from app.cli.deps import InputArg, OutOpt, SeedOpt, ThreadsOpt, run_command
from app.core.config import settings
from app.core.exceptions import InputValidationError
from app.models import EnetModel
from app.services import causal
from app.storage import read_model, write_lag_report


def report(
    model: InputArg,
    svg: Annotated[bool, typer.Option("--svg", help="Also draw one bar chart per profile.")] = False,
    tol: Annotated[
        float, typer.Option("--tol", min=0, help="Active threshold on standardized coefficients.")
    ] = settings.ACTIVE_LAG_TOL,
    seed: SeedOpt = settings.SEED,
    threads: ThreadsOpt = settings.THREADS,
    out: OutOpt = Path("."),
) -> None:
    """
    Lag profiles of a fitted elastic net: six blocks of twelve lags.
    """
    with run_command(
        "report",
        seed=seed,
        threads=threads,
        out=out,
        inputs={"model": model},
        config={"svg": svg, "tol": tol},
    ) as ctx:
        fitted = read_model(path=model)
        if not isinstance(fitted, EnetModel):
            raise InputValidationError("lag report requires an elastic-net model")
        lags = causal.lag_report(fitted, tol)
        ctx.record(
            *write_lag_report(
                report=lags,
                json_path=ctx.path("lag_report.json"),
                csv_path=ctx.path("lag_report.csv"),
            )
        )
        if svg:
            ctx.record(*causal.render_svg(lags, out))
