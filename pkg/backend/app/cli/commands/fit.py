import logging
from pathlib import Path
from typing import Annotated, Any, cast

import numpy as np
import typer

from app.cli.deps import (
    InputArg,
    ModelKind,
    OutOpt,
    Rule,
    RunContext,
    SeedOpt,
    ThreadsOpt,
    parse_auto,
    run_command,
)
from app.core.config import settings
from app.models import (
    DataSplit,
    Dataset,
    EnetConfig,
    EnetModel,
    GamModel,
    GbtConfig,
    MseRow,
    TreeEnsemble,
)
from app.services import elasticnet, evaluation, features, gam, gbt
from app.storage import (
    read_dataset,
    write_cv_curve,
    write_model,
    write_mse_table,
    write_split,
)

logger = logging.getLogger(__name__)


def split_indices(
    ctx: RunContext, D: Dataset, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Train/test row indices; the split is written to split.json by plot id."""
    train, test = evaluation.train_test_split(len(D), settings.TRAIN_RATIO, seed)
    split = DataSplit(
        seed=seed,
        ratio=settings.TRAIN_RATIO,
        train=[D.plot_ids[i] for i in train],
        test=[D.plot_ids[i] for i in test],
    )
    ctx.record(write_split(split=split, path=ctx.path("split.json")))
    logger.info(f"split {len(D)} rows into {train.size} train / {test.size} test")
    return train, test


def _fit_enet(
    ctx: RunContext,
    train: Dataset,
    *,
    alpha: float,
    lam: float | None,
    rule: Rule,
    folds: int,
) -> EnetModel:
    cfg = EnetConfig(
        alpha=alpha, tol=settings.ENET_TOL, max_sweeps=settings.ENET_MAX_SWEEPS
    )
    if lam is not None:
        return elasticnet.fit(
            train.X,
            train.y,
            cfg.model_copy(update={"lambda_": lam}),
            column_names=train.columns,
        )
    model, curve = evaluation.fit_enet_cv(
        train,
        alpha=alpha,
        k=folds,
        seed=ctx.seed,
        rule=cast(evaluation.SelectionRule, rule.value),
        cfg=cfg,
        threads=ctx.threads,
    )
    ctx.record(write_cv_curve(curve=curve, path=ctx.path("cv_curve.csv")))
    return model


def _fit_gbt(
    ctx: RunContext, train: Dataset, cfg: GbtConfig, rounds: int | None
) -> TreeEnsemble:
    if rounds is None:
        curve = evaluation.cv_rounds_gbt(
            train.X,
            train.y,
            cfg,
            settings.gbt_rounds_grid,
            settings.GBT_CV_FOLDS,
            ctx.seed,
            threads=ctx.threads,
        )
        ctx.record(write_cv_curve(curve=curve, path=ctx.path("cv_rounds.csv")))
        rounds = evaluation.select_rounds(curve)
        logger.info(f"selected {rounds} boosting rounds")
    return gbt.fit_ensemble(
        train.X,
        train.y,
        cfg.model_copy(update={"n_rounds": rounds}),
        column_names=train.columns,
    )


def predict(model: EnetModel | TreeEnsemble | GamModel, X: np.ndarray) -> np.ndarray:
    if isinstance(model, TreeEnsemble):
        return gbt.predict_batch(model, X)
    if isinstance(model, GamModel):
        return gam.predict_gam_batch(model, X)
    return elasticnet.predict(model, X)


def fit(
    dataset: InputArg,
    model: Annotated[ModelKind, typer.Option("--model", case_sensitive=False)],
    alpha: Annotated[float, typer.Option("--alpha", min=0, max=1)] = settings.ENET_ALPHA,
    lambda_: Annotated[
        str, typer.Option("--lambda", help="'auto' selects by cross-validation.")
    ] = "auto",
    rule: Annotated[Rule, typer.Option("--rule", help="Lambda selection rule.")] = Rule.MIN,
    folds: Annotated[int, typer.Option("--folds", min=2)] = settings.ENET_CV_FOLDS,
    gamma: Annotated[float, typer.Option("--gamma", min=0)] = settings.GBT_GAMMA,
    l2: Annotated[float, typer.Option("--l2", min=0)] = settings.GBT_LAMBDA,
    max_depth: Annotated[int, typer.Option("--max-depth", min=0)] = settings.GBT_MAX_DEPTH,
    rounds: Annotated[
        str, typer.Option("--rounds", help="'auto' selects by cross-validation.")
    ] = "auto",
    learning_rate: Annotated[
        float, typer.Option("--learning-rate", min=0, max=1)
    ] = settings.GBT_LEARNING_RATE,
    smoothing: Annotated[
        str, typer.Option("--smoothing", help="'auto' selects by GCV.")
    ] = "auto",
    seed: SeedOpt = settings.SEED,
    threads: ThreadsOpt = settings.THREADS,
    out: OutOpt = Path("."),
) -> None:
    """
    Fit one model on the training split and report its train/validation MSE.
    """
    lam = parse_auto(lambda_, name="--lambda")
    n_rounds = parse_auto(rounds, name="--rounds")
    smooth = parse_auto(smoothing, name="--smoothing")
    config: dict[str, Any] = {"model": model.value}
    if model is ModelKind.ENET:
        config.update(alpha=alpha, lambda_=lambda_, rule=rule.value, folds=folds)
    elif model is ModelKind.GBT:
        config.update(
            gamma=gamma, l2=l2, max_depth=max_depth, rounds=rounds, learning_rate=learning_rate
        )
    else:
        config.update(smoothing=smoothing)

    with run_command(
        "fit",
        seed=seed,
        threads=threads,
        out=out,
        inputs={"dataset": dataset},
        config=config,
    ) as ctx:
        D = read_dataset(path=dataset, columns=features.column_names())
        train_idx, test_idx = split_indices(ctx, D, seed)
        train, test = D.subset(train_idx), D.subset(test_idx)
        fitted: EnetModel | TreeEnsemble | GamModel
        if model is ModelKind.ENET:
            fitted = _fit_enet(
                ctx, train, alpha=alpha, lam=lam, rule=rule, folds=folds
            )
        elif model is ModelKind.GBT:
            cfg = GbtConfig(
                gamma=gamma, lambda_=l2, max_depth=max_depth, learning_rate=learning_rate
            )
            fitted = _fit_gbt(ctx, train, cfg, None if n_rounds is None else int(n_rounds))
        else:
            fitted = gam.fit_gam(train, "auto" if smooth is None else smooth)
        row = MseRow(
            model=model.value,
            train=evaluation.mse(train.y, predict(fitted, train.X)),
            validation=evaluation.mse(test.y, predict(fitted, test.X)),
        )
        logger.info(
            f"{row.model}: train MSE {row.train:.6g}, validation MSE {row.validation:.6g}"
        )
        ctx.record(
            write_model(model=fitted, path=ctx.path("model.json")),
            write_mse_table(rows=[row], path=ctx.path("mse_table.csv")),
        )
