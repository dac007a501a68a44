import logging
from pathlib import Path
from typing import Annotated, Any, cast

import typer

from app.cli.deps import (
    InputArg,
    ModelKind,
    OutOpt,
    Rule,
    SeedOpt,
    ThreadsOpt,
    run_command,
)
from app.core.config import settings
from app.core.exceptions import ConfigError
from app.models import EnetConfig, GbtConfig
from app.services import elasticnet, evaluation, features
from app.storage import read_dataset, write_cv_curve, write_cv_grid

logger = logging.getLogger(__name__)

# Boosting grid searched when no values are given on the command line
GAMMA_GRID = (0.0, 0.1, 0.5)
L2_GRID = (0.2, 0.6, 1.0)


def cv(
    dataset: InputArg,
    model: Annotated[ModelKind, typer.Option("--model", case_sensitive=False)],
    alpha: Annotated[float, typer.Option("--alpha", min=0, max=1)] = settings.ENET_ALPHA,
    rule: Annotated[Rule, typer.Option("--rule")] = Rule.MIN,
    folds: Annotated[int | None, typer.Option("--folds", min=2)] = None,
    n_lambdas: Annotated[
        int, typer.Option("--n-lambdas", min=1)
    ] = settings.ENET_N_LAMBDAS,
    gamma: Annotated[list[float] | None, typer.Option("--gamma", min=0)] = None,
    l2: Annotated[list[float] | None, typer.Option("--l2", min=0)] = None,
    max_depth: Annotated[list[int] | None, typer.Option("--max-depth", min=0)] = None,
    rounds: Annotated[list[int] | None, typer.Option("--rounds", min=0)] = None,
    learning_rate: Annotated[
        float, typer.Option("--learning-rate", min=0, max=1)
    ] = settings.GBT_LEARNING_RATE,
    seed: SeedOpt = settings.SEED,
    threads: ThreadsOpt = settings.THREADS,
    out: OutOpt = Path("."),
) -> None:
    """
    Cross-validation curves: the lambda path for enet, rounds and the
    (gamma, lambda, depth) grid for gbt.
    """
    gammas = list(gamma or GAMMA_GRID)
    l2s = list(l2 or L2_GRID)
    depths = list(max_depth or settings.gbt_depth_grid)
    rounds_grid = sorted(rounds or settings.gbt_rounds_grid)
    config: dict[str, Any] = {"model": model.value}
    if model is ModelKind.ENET:
        k = folds or settings.ENET_CV_FOLDS
        config.update(alpha=alpha, rule=rule.value, folds=k, n_lambdas=n_lambdas)
    else:
        k = folds or settings.GBT_CV_FOLDS
        config.update(
            gammas=gammas,
            l2s=l2s,
            depths=depths,
            rounds=rounds_grid,
            learning_rate=learning_rate,
            folds=k,
        )

    with run_command(
        "cv",
        seed=seed,
        threads=threads,
        out=out,
        inputs={"dataset": dataset},
        config=config,
    ) as ctx:
        if model is ModelKind.GAM:
            raise ConfigError(
                "cv supports enet and gbt; gam smoothing is chosen by GCV in fit"
            )
        D = read_dataset(path=dataset, columns=features.column_names())
        if model is ModelKind.ENET:
            grid = elasticnet.lambda_path(
                D.X, D.y, alpha, n_lambdas, settings.ENET_LAMBDA_RATIO
            )
            curve = evaluation.cv_curve_enet(
                D.X,
                D.y,
                alpha,
                grid.tolist(),
                k,
                seed,
                cfg=EnetConfig(
                    alpha=alpha, tol=settings.ENET_TOL, max_sweeps=settings.ENET_MAX_SWEEPS
                ),
                threads=threads,
            )
            lam = evaluation.select_lambda(curve, cast(evaluation.SelectionRule, rule.value))
            logger.info(f"cross-validated lambda={lam!r} ({rule.value})")
            ctx.record(write_cv_curve(curve=curve, path=ctx.path("cv_curve.csv")))
            return

        # Rounds curve at the first listed values, or the calibrated defaults
        base = GbtConfig(
            gamma=gammas[0] if gamma else settings.GBT_GAMMA,
            lambda_=l2s[0] if l2 else settings.GBT_LAMBDA,
            max_depth=depths[0] if max_depth else settings.GBT_MAX_DEPTH,
            learning_rate=learning_rate,
        )
        curve = evaluation.cv_rounds_gbt(
            D.X, D.y, base, rounds_grid, k, seed, threads=threads
        )
        points = evaluation.cv_grid_gbt(
            D.X,
            D.y,
            gammas=gammas,
            lambdas=l2s,
            depths=depths,
            rounds_grid=rounds_grid,
            k=k,
            seed=seed,
            learning_rate=learning_rate,
            threads=threads,
        )
        best = evaluation.best_grid_point(points)
        logger.info(
            f"best boosting point gamma={best.gamma} lambda={best.lambda_} "
            f"depth={best.max_depth} rounds={best.n_rounds}"
        )
        ctx.record(
            write_cv_curve(curve=curve, path=ctx.path("cv_rounds.csv")),
            write_cv_grid(points=points, path=ctx.path("cv_grid.csv")),
        )
