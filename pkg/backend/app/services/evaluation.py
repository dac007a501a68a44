"""
Splits, k-fold cross-validation curves, hyperparameter selection and MSE tables.

Fold and grid work may run on a thread pool; results are gathered in index
order and aggregated in a fixed order so the output never depends on thread
count.
"""
import itertools
import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import Literal, TypeVar

import numpy as np
from numpy.typing import ArrayLike

from app.core import rng
from app.core.config import settings
from app.core.exceptions import ConvergenceError, InputValidationError, NumericalError
from app.models import (
    CvCurve,
    Dataset,
    EnetConfig,
    EnetModel,
    GbtConfig,
    GbtGridPoint,
    MseRow,
)
from app.services import elasticnet, gam, gbt

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

SelectionRule = Literal["min", "one_se"]


def _gather(fn: Callable[[T], R], items: Sequence[T], threads: int) -> list[R]:
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def mse(y: ArrayLike, y_hat: ArrayLike) -> float:
    a = np.asarray(y, dtype=float)
    b = np.asarray(y_hat, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise InputValidationError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise InputValidationError("mse of an empty vector")
    return float(np.mean((a - b) ** 2))


def kfold_split(N: int, k: int, seed: int) -> list[np.ndarray]:
    if not 2 <= k <= N:
        raise InputValidationError(f"need 2 <= k <= N, got k={k}, N={N}")
    perm = rng.permutation(N, seed, rng.FOLD_STREAM)
    folds = [np.sort(f) for f in np.array_split(perm, k)]
    covered = np.sort(np.concatenate(folds))
    assert np.array_equal(covered, np.arange(N)), "folds do not partition the rows"
    return folds


def train_test_split(
    N: int, ratio: float = 0.8, seed: int = 42
) -> tuple[np.ndarray, np.ndarray]:
    if not 0 < ratio < 1:
        raise InputValidationError(f"ratio must lie in (0, 1), got {ratio}")
    n_train = min(math.ceil(ratio * N), N)
    perm = rng.permutation(N, seed, rng.SPLIT_STREAM)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def _check_folds(folds: Sequence[np.ndarray], N: int, k: int) -> list[np.ndarray]:
    out = [np.sort(np.asarray(f, dtype=int)) for f in folds]
    covered = np.sort(np.concatenate(out)) if out else np.empty(0, dtype=int)
    if len(out) != k or not np.array_equal(covered, np.arange(N)):
        raise InputValidationError(f"folds do not partition {N} rows into {k} parts")
    return out


def _complement(N: int, fold: np.ndarray) -> np.ndarray:
    mask = np.ones(N, dtype=bool)
    mask[fold] = False
    return np.flatnonzero(mask)


def _annotate(exc: NumericalError, fold: int) -> NumericalError:
    message = f"fold {fold}: {exc}"
    if isinstance(exc, ConvergenceError):
        return ConvergenceError(
            message,
            beta0=exc.beta0,
            beta=exc.beta,
            kkt_residual=exc.kkt_residual,
            n_sweeps=exc.n_sweeps,
        )
    return NumericalError(message)


def _summarise(per_fold: np.ndarray) -> tuple[list[float], list[float]]:
    """Mean and standard error over folds (axis 0)."""
    k = per_fold.shape[0]
    mean = per_fold.mean(axis=0)
    stderr = per_fold.std(axis=0, ddof=1) / math.sqrt(k)
    return mean.tolist(), stderr.tolist()


def cv_curve_enet(
    X: ArrayLike,
    y: ArrayLike,
    alpha: float,
    grid: Sequence[float],
    k: int,
    seed: int,
    *,
    cfg: EnetConfig | None = None,
    folds: Sequence[np.ndarray] | None = None,
    threads: int = 1,
) -> CvCurve:
    """`folds` overrides the seeded k-fold assignment; it must partition the rows into k."""
    if len(grid) == 0:
        raise InputValidationError("lambda grid is empty")
    Xa = np.asarray(X, dtype=float)
    ya = np.asarray(y, dtype=float)
    cfg = (cfg or EnetConfig()).model_copy(update={"alpha": alpha})
    fold_rows = (
        kfold_split(ya.size, k, seed) if folds is None else _check_folds(folds, ya.size, k)
    )
    grid_arr = np.asarray(grid, dtype=float)
    # Warm starts run from the largest penalty down
    descending = np.argsort(-grid_arr, kind="stable")

    def run(f: int) -> np.ndarray:
        val = fold_rows[f]
        train = _complement(ya.size, val)
        try:
            models = elasticnet.fit_path(Xa[train], ya[train], grid_arr[descending], cfg)
        except NumericalError as exc:
            raise _annotate(exc, f) from exc
        out = np.empty(grid_arr.size)
        for pos, model in zip(descending, models, strict=True):
            out[pos] = mse(ya[val], elasticnet.predict(model, Xa[val]))
        logger.info(f"enet CV fold {f + 1}/{k} done")
        return out

    per_fold = np.vstack(_gather(run, list(range(k)), threads))
    mean, stderr = _summarise(per_fold)
    return CvCurve(
        parameter="lambda",
        grid=grid_arr.tolist(),
        mean_mse=mean,
        stderr_mse=stderr,
        n_folds=k,
        seed=seed,
    )


def select_lambda(curve: CvCurve, rule: SelectionRule = "min") -> float:
    grid = np.asarray(curve.grid)
    mean = np.asarray(curve.mean_mse)
    stderr = np.asarray(curve.stderr_mse)
    best = float(mean.min())
    at_min = np.flatnonzero(mean == best)
    pick = at_min[np.argmax(grid[at_min])]
    if rule == "min":
        return float(grid[pick])
    if rule == "one_se":
        within = np.flatnonzero(mean <= best + stderr[pick])
        return float(grid[within].max())
    raise InputValidationError(f"unknown selection rule {rule!r}")


def fit_enet_cv(
    D: Dataset,
    *,
    alpha: float,
    k: int,
    seed: int,
    rule: SelectionRule = "min",
    cfg: EnetConfig | None = None,
    n_lambdas: int | None = None,
    threads: int = 1,
) -> tuple[EnetModel, CvCurve]:
    """Cross-validate a lambda path, then refit on all of D at the selected lambda."""
    cfg = (cfg or EnetConfig()).model_copy(update={"alpha": alpha})
    grid = elasticnet.lambda_path(
        D.X,
        D.y,
        alpha,
        n_lambdas or settings.ENET_N_LAMBDAS,
        settings.ENET_LAMBDA_RATIO,
        standardize=cfg.standardize,
    )
    curve = cv_curve_enet(D.X, D.y, alpha, grid.tolist(), k, seed, cfg=cfg, threads=threads)
    lam = select_lambda(curve, rule)
    logger.info(f"selected lambda={lam:.6g} by rule {rule}")
    model = elasticnet.fit(
        D.X, D.y, cfg.model_copy(update={"lambda_": lam}), column_names=D.columns
    )
    return model, curve


def _rounds_per_fold(
    Xa: np.ndarray,
    ya: np.ndarray,
    folds: list[np.ndarray],
    cfg: GbtConfig,
    rounds: list[int],
    threads: int,
) -> np.ndarray:
    top = max(rounds)

    def run(f: int) -> np.ndarray:
        val = folds[f]
        train = _complement(ya.size, val)
        ens = gbt.fit_ensemble(
            Xa[train], ya[train], cfg.model_copy(update={"n_rounds": top})
        )
        staged = gbt.staged_mse(ens, Xa[val], ya[val])
        base = mse(ya[val], np.full(val.size, ens.base_score))
        return np.array([staged[r - 1] if r > 0 else base for r in rounds])

    return np.vstack(_gather(run, list(range(len(folds))), threads))


def cv_rounds_gbt(
    X: ArrayLike,
    y: ArrayLike,
    cfg: GbtConfig,
    rounds_grid: Sequence[int],
    k: int,
    seed: int,
    *,
    threads: int = 1,
) -> CvCurve:
    rounds = sorted(int(r) for r in rounds_grid)
    if not rounds or rounds[0] < 0:
        raise InputValidationError(f"invalid rounds grid {rounds_grid!r}")
    Xa = np.asarray(X, dtype=float)
    ya = np.asarray(y, dtype=float)
    folds = kfold_split(ya.size, k, seed)
    per_fold = _rounds_per_fold(Xa, ya, folds, cfg, rounds, threads)
    mean, stderr = _summarise(per_fold)
    return CvCurve(
        parameter="n_rounds",
        grid=[float(r) for r in rounds],
        mean_mse=mean,
        stderr_mse=stderr,
        n_folds=k,
        seed=seed,
    )


def select_rounds(curve: CvCurve) -> int:
    """Fewest rounds reaching the minimum mean MSE."""
    mean = np.asarray(curve.mean_mse)
    return int(curve.grid[int(np.argmin(mean))])


def cv_grid_gbt(
    X: ArrayLike,
    y: ArrayLike,
    *,
    gammas: Sequence[float],
    lambdas: Sequence[float],
    depths: Sequence[int],
    rounds_grid: Sequence[int],
    k: int,
    seed: int,
    learning_rate: float = 0.1,
    threads: int = 1,
) -> list[GbtGridPoint]:
    """One point per (gamma, lambda, depth), each at its best round count."""
    Xa = np.asarray(X, dtype=float)
    ya = np.asarray(y, dtype=float)
    rounds = sorted(int(r) for r in rounds_grid)
    folds = kfold_split(ya.size, k, seed)
    points: list[GbtGridPoint] = []
    for gamma, lam, depth in itertools.product(gammas, lambdas, depths):
        cfg = GbtConfig(
            gamma=gamma, lambda_=lam, max_depth=depth, learning_rate=learning_rate
        )
        per_fold = _rounds_per_fold(Xa, ya, folds, cfg, rounds, threads)
        mean, stderr = _summarise(per_fold)
        best = int(np.argmin(mean))
        points.append(
            GbtGridPoint(
                gamma=gamma,
                lambda_=lam,
                max_depth=depth,
                n_rounds=rounds[best],
                mean_mse=mean[best],
                stderr_mse=stderr[best],
            )
        )
        logger.info(
            f"gbt grid gamma={gamma} lambda={lam} depth={depth}: "
            f"CV MSE {mean[best]:.6g} at {rounds[best]} rounds"
        )
    return points


def best_grid_point(points: Sequence[GbtGridPoint]) -> GbtGridPoint:
    """Lowest mean MSE; ties favour larger gamma, larger lambda, then smaller depth."""
    if not points:
        raise InputValidationError("empty boosting grid")
    return min(
        points,
        key=lambda p: (p.mean_mse, -p.gamma, -p.lambda_, p.max_depth, p.n_rounds),
    )


def calibrate_gbt(
    D: Dataset,
    cfg: GbtConfig,
    *,
    depths: Sequence[int],
    rounds_grid: Sequence[int],
    k: int,
    seed: int,
    threads: int = 1,
) -> GbtConfig:
    """
    Rounds curve by k-fold CV at each candidate depth. The depth whose selected
    round count has the lowest CV MSE wins; ties keep the shallower tree.
    """
    if not depths:
        raise InputValidationError("empty depth grid")
    best: tuple[float, GbtConfig] | None = None
    for depth in sorted(set(depths)):
        candidate = cfg.model_copy(update={"max_depth": depth})
        curve = cv_rounds_gbt(D.X, D.y, candidate, rounds_grid, k, seed, threads=threads)
        rounds = select_rounds(curve)
        score = curve.mean_mse[curve.grid.index(float(rounds))]
        logger.info(f"gbt depth {depth}: CV MSE {score:.6g} at {rounds} rounds")
        if best is None or score < best[0]:
            best = (score, candidate.model_copy(update={"n_rounds": rounds}))
    assert best is not None
    return best[1]


def compare_models(
    D: Dataset,
    train: np.ndarray,
    test: np.ndarray,
    *,
    enet_cfg: EnetConfig | None = None,
    gbt_cfg: GbtConfig | None = None,
    gbt_depths: Sequence[int] | None = None,
    gbt_rounds: Sequence[int] | None = None,
    smoothing: gam.Smoothing = "auto",
    enet_folds: int | None = None,
    seed: int = 42,
    threads: int = 1,
) -> list[MseRow]:
    """
    Train/validation MSE for the elastic net, boosted trees and additive model.

    Lambda is chosen by CV on the training rows, boosting depth and rounds by
    `GBT_CV_FOLDS`-fold CV over `gbt_depths` x `gbt_rounds`, and the smoothing
    penalty by GCV. The validation rows are never seen before scoring.
    """
    enet_cfg = enet_cfg or EnetConfig(alpha=settings.ENET_ALPHA)
    gbt_cfg = gbt_cfg or GbtConfig(
        gamma=settings.GBT_GAMMA,
        lambda_=settings.GBT_LAMBDA,
        max_depth=settings.GBT_MAX_DEPTH,
        learning_rate=settings.GBT_LEARNING_RATE,
    )
    train_set, test_set = D.subset(train), D.subset(test)
    rows: list[MseRow] = []

    enet_model, _ = fit_enet_cv(
        train_set,
        alpha=enet_cfg.alpha,
        k=enet_folds or settings.ENET_CV_FOLDS,
        seed=seed,
        cfg=enet_cfg,
        threads=threads,
    )
    rows.append(
        MseRow(
            model="enet",
            train=mse(train_set.y, elasticnet.predict(enet_model, train_set.X)),
            validation=mse(test_set.y, elasticnet.predict(enet_model, test_set.X)),
        )
    )

    calibrated = calibrate_gbt(
        train_set,
        gbt_cfg,
        depths=gbt_depths or settings.gbt_depth_grid,
        rounds_grid=gbt_rounds or settings.gbt_rounds_grid,
        k=settings.GBT_CV_FOLDS,
        seed=seed,
        threads=threads,
    )
    logger.info(
        f"boosting with depth {calibrated.max_depth} for {calibrated.n_rounds} rounds"
    )
    ens = gbt.fit_ensemble(train_set.X, train_set.y, calibrated, column_names=D.columns)
    rows.append(
        MseRow(
            model="gbt",
            train=mse(train_set.y, gbt.predict_batch(ens, train_set.X)),
            validation=mse(test_set.y, gbt.predict_batch(ens, test_set.X)),
        )
    )

    additive = gam.fit_gam(train_set, smoothing)
    rows.append(
        MseRow(
            model="gam",
            train=mse(train_set.y, gam.predict_gam_batch(additive, train_set.X)),
            validation=mse(test_set.y, gam.predict_gam_batch(additive, test_set.X)),
        )
    )
    for row in rows:
        logger.info(
            f"{row.model}: train MSE {row.train:.6g}, validation MSE {row.validation:.6g}, "
            f"gap {row.validation - row.train:.6g}"
        )
    return rows
