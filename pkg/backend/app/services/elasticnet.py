"""
Elastic-net regression by cyclic coordinate descent.

Objective (no 1/N factor, intercept unpenalized):

    0.5 * ||y - b0 - X b||^2 + lambda * (0.5 * (1 - alpha) * ||b||^2 + alpha * ||b||_1)

Columns are centered (and by default scaled to unit population variance) before
solving; coefficients are reported back in the original units.
"""
import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import lstsq

from app.core.config import settings
from app.core.exceptions import ConvergenceError, InputValidationError, NumericalError
from app.models import EnetConfig, EnetModel

logger = logging.getLogger(__name__)

# Relative singular-value cutoff for the support solve; exactly aliased
# columns fall below it
_POLISH_COND = 1e-10


def soft_threshold(v: float, t: float) -> float:
    if t < 0:
        raise InputValidationError(f"threshold must be non-negative, got {t}")
    if v > t:
        return v - t
    if v < -t:
        return v + t
    return 0.0


@dataclass
class _Problem:
    """Centered design on the solver scale; dropped columns excluded."""

    Xs: np.ndarray
    yc: np.ndarray
    y_mean: float
    mean: np.ndarray
    scale: np.ndarray
    keep: np.ndarray
    gram: np.ndarray
    cov: np.ndarray


def _check_inputs(X: np.ndarray, y: np.ndarray) -> None:
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise InputValidationError(
            f"design {X.shape} and response {y.shape} do not agree"
        )
    if X.shape[0] < 2:
        raise InputValidationError(f"at least 2 rows required, got {X.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InputValidationError("design and response must be finite")


def _prepare(X: ArrayLike, y: ArrayLike, *, standardize: bool) -> _Problem:
    Xa = np.asarray(X, dtype=float)
    ya = np.asarray(y, dtype=float)
    _check_inputs(Xa, ya)
    mean = Xa.mean(axis=0)
    Xc = Xa - mean
    sd = Xc.std(axis=0)
    keep = np.ptp(Xa, axis=0) > 0
    scale = np.where(keep, sd if standardize else 1.0, 1.0)
    Xs = Xc[:, keep] / scale[keep]
    y_mean = float(ya.mean())
    yc = ya - y_mean
    return _Problem(
        Xs=Xs,
        yc=yc,
        y_mean=y_mean,
        mean=mean,
        scale=scale,
        keep=keep,
        gram=Xs.T @ Xs,
        cov=Xs.T @ yc,
    )


def _objective(p: _Problem, b: np.ndarray, lam: float, alpha: float) -> float:
    r = p.yc - p.Xs @ b
    penalty = 0.5 * (1.0 - alpha) * float(b @ b) + alpha * float(np.abs(b).sum())
    return 0.5 * float(r @ r) + lam * penalty


def _kkt(gram_diag: np.ndarray, grad: np.ndarray, b: np.ndarray, lam: float, alpha: float) -> float:
    """Subgradient violation per coordinate, divided by the coordinate curvature."""
    if b.size == 0:
        return 0.0
    l1 = lam * alpha
    g = grad - lam * (1.0 - alpha) * b
    active = b != 0
    violation = np.where(
        active, np.abs(g - l1 * np.sign(b)), np.maximum(np.abs(g) - l1, 0.0)
    )
    curvature = gram_diag + lam * (1.0 - alpha)
    return float(np.max(violation / curvature))


def _polish(
    G: np.ndarray, c: np.ndarray, b: np.ndarray, lam: float, alpha: float
) -> np.ndarray | None:
    """
    Solve the stationarity equations exactly on the current support with the
    current signs, moving as little as possible from `b` when the support is
    collinear. Returns None when the result leaves that sign pattern.
    """
    active = np.flatnonzero(b)
    if active.size == 0:
        return None
    signs = np.sign(b[active])
    M = G[np.ix_(active, active)] + lam * (1.0 - alpha) * np.eye(active.size)
    rhs = c[active] - lam * alpha * signs
    step = lstsq(M, rhs - M @ b[active], cond=_POLISH_COND)[0]
    moved = b[active] + step
    if np.any(np.sign(moved) != signs):
        return None
    out = np.zeros_like(b)
    out[active] = moved
    return out


def _descend(
    p: _Problem, b: np.ndarray, cfg: EnetConfig
) -> tuple[np.ndarray, int, float]:
    lam, alpha = cfg.lambda_, cfg.alpha
    G, c = p.gram, p.cov
    diag = np.diag(G).copy()
    denom = diag + lam * (1.0 - alpha)
    l1 = lam * alpha
    accept = 10.0 * cfg.tol
    b = b.copy()
    Gb = G @ b
    previous = _objective(p, b, lam, alpha) if settings.DEBUG else np.inf
    support = np.sign(b)
    backoff, next_polish = 1, 1
    kkt = np.inf
    for sweep in range(1, cfg.max_sweeps + 1):
        max_change = 0.0
        for j in range(b.size):
            old = b[j]
            rho = c[j] - Gb[j] + diag[j] * old
            new = soft_threshold(rho, l1) / denom[j]
            if new != old:
                delta = new - old
                Gb += G[:, j] * delta
                b[j] = new
                max_change = max(max_change, abs(delta))
        if settings.DEBUG:
            current = _objective(p, b, lam, alpha)
            if current > previous + 1e-12 * max(1.0, abs(previous)):
                raise NumericalError(
                    f"objective increased at sweep {sweep}: {previous!r} -> {current!r}"
                )
            previous = current
        kkt = _kkt(diag, c - Gb, b, lam, alpha)
        if kkt <= accept:
            logger.debug(f"sweep {sweep}: kkt {kkt:.3g}, largest step {max_change:.3g}")
            return b, sweep, kkt

        # Same signs as the previous sweep: try an exact solve on that support
        settled = np.sign(b)
        if not np.array_equal(settled, support):
            support = settled
            backoff, next_polish = 1, sweep + 1
            continue
        if sweep < next_polish:
            continue
        polished = _polish(G, c, b, lam, alpha)
        if polished is not None:
            polished_kkt = _kkt(diag, c - G @ polished, polished, lam, alpha)
            if polished_kkt <= accept and (
                not settings.DEBUG
                or _objective(p, polished, lam, alpha)
                <= previous + 1e-12 * max(1.0, abs(previous))
            ):
                logger.debug(f"support solve accepted at sweep {sweep}")
                return polished, sweep, polished_kkt
        next_polish = sweep + backoff
        backoff *= 2
    raise ConvergenceError(
        f"coordinate descent did not converge in {cfg.max_sweeps} sweeps "
        f"(lambda={lam!r}, kkt residual {kkt:.3g})",
        beta0=0.0,
        beta=b,
        kkt_residual=kkt,
        n_sweeps=cfg.max_sweeps,
    )


def _to_model(
    p: _Problem,
    b: np.ndarray,
    cfg: EnetConfig,
    *,
    n_sweeps: int,
    kkt: float,
    column_names: Sequence[str],
) -> EnetModel:
    beta_std = np.zeros(p.keep.size)
    beta_std[p.keep] = b
    beta = np.where(p.keep, beta_std / p.scale, 0.0)
    beta0 = p.y_mean - float(p.mean @ beta)
    dropped = [name for name, k in zip(column_names, p.keep, strict=True) if not k]
    return EnetModel(
        alpha=cfg.alpha,
        lambda_=cfg.lambda_,
        beta0=beta0,
        beta=beta.tolist(),
        column_names=list(column_names),
        kkt_residual=kkt,
        n_sweeps=n_sweeps,
        standardized=cfg.standardize,
        beta_std=beta_std.tolist(),
        x_mean=p.mean.tolist(),
        x_scale=p.scale.tolist(),
        dropped_columns=dropped,
    )


def _names(column_names: Sequence[str] | None, p: int) -> list[str]:
    if column_names is None:
        return [f"x{j}" for j in range(p)]
    if len(column_names) != p:
        raise InputValidationError(
            f"{len(column_names)} column names for {p} columns"
        )
    return list(column_names)


def _solve(
    p: _Problem,
    b: np.ndarray,
    cfg: EnetConfig,
    names: list[str],
) -> tuple[EnetModel, np.ndarray]:
    try:
        b, n_sweeps, kkt = _descend(p, b, cfg)
    except ConvergenceError as exc:
        partial = _to_model(
            p, exc.beta, cfg, n_sweeps=exc.n_sweeps, kkt=exc.kkt_residual, column_names=names
        )
        exc.beta = partial.beta
        exc.beta0 = partial.beta0
        raise
    model = _to_model(p, b, cfg, n_sweeps=n_sweeps, kkt=kkt, column_names=names)
    return model, b


def fit(
    X: ArrayLike,
    y: ArrayLike,
    cfg: EnetConfig | None = None,
    *,
    column_names: Sequence[str] | None = None,
) -> EnetModel:
    cfg = cfg or EnetConfig()
    p = _prepare(X, y, standardize=cfg.standardize)
    names = _names(column_names, p.keep.size)
    for name in (n for n, k in zip(names, p.keep, strict=True) if not k):
        logger.info(f"column {name} has zero variance; coefficient fixed at 0")
    model, _ = _solve(p, np.zeros(p.Xs.shape[1]), cfg, names)
    logger.debug(
        f"enet lambda={cfg.lambda_:.6g} converged in {model.n_sweeps} sweeps, "
        f"kkt residual {model.kkt_residual:.3g}"
    )
    return model


def lambda_path(
    X: ArrayLike,
    y: ArrayLike,
    alpha: float,
    n_lambdas: int = 100,
    ratio: float = 1e-4,
    *,
    standardize: bool = True,
) -> np.ndarray:
    """Descending log-uniform grid from the smallest all-zero penalty."""
    if alpha <= 0:
        raise InputValidationError("lambda path needs alpha > 0")
    if n_lambdas < 1 or not 0 < ratio < 1:
        raise InputValidationError(
            f"invalid path shape n_lambdas={n_lambdas}, ratio={ratio}"
        )
    p = _prepare(X, y, standardize=standardize)
    lambda_max = float(np.max(np.abs(p.cov), initial=0.0)) / alpha
    if lambda_max <= 0:
        raise InputValidationError("response is constant or uncorrelated with every column")
    if n_lambdas == 1:
        return np.array([lambda_max])
    return np.geomspace(lambda_max, lambda_max * ratio, n_lambdas)


def fit_path(
    X: ArrayLike,
    y: ArrayLike,
    lambdas: Sequence[float] | np.ndarray,
    cfg: EnetConfig | None = None,
    *,
    column_names: Sequence[str] | None = None,
) -> list[EnetModel]:
    """Fits along `lambdas` in the given order, each warm-started from the last."""
    cfg = cfg or EnetConfig()
    p = _prepare(X, y, standardize=cfg.standardize)
    names = _names(column_names, p.keep.size)
    b = np.zeros(p.Xs.shape[1])
    models: list[EnetModel] = []
    for lam in lambdas:
        step = cfg.model_copy(update={"lambda_": float(lam)})
        model, b = _solve(p, b, step, names)
        models.append(model)
    return models


def predict(model: EnetModel, X: ArrayLike) -> np.ndarray:
    Xa = np.atleast_2d(np.asarray(X, dtype=float))
    if Xa.shape[1] != len(model.beta):
        raise InputValidationError(
            f"model has {len(model.beta)} coefficients, design has {Xa.shape[1]} columns"
        )
    return model.beta0 + Xa @ np.asarray(model.beta)


def _solver_view(
    model: EnetModel, X: ArrayLike, y: ArrayLike
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    Xa = np.asarray(X, dtype=float)
    ya = np.asarray(y, dtype=float)
    _check_inputs(Xa, ya)
    if Xa.shape[1] != len(model.beta):
        raise InputValidationError(
            f"model has {len(model.beta)} coefficients, design has {Xa.shape[1]} columns"
        )
    keep = np.array([name not in model.dropped_columns for name in model.column_names])
    scale = np.asarray(model.x_scale)
    Xs = (Xa - np.asarray(model.x_mean))[:, keep] / scale[keep]
    r = ya - predict(model, Xa)
    return Xs, r, np.asarray(model.beta_std)[keep]


def objective(model: EnetModel, X: ArrayLike, y: ArrayLike) -> float:
    _, r, b = _solver_view(model, X, y)
    penalty = 0.5 * (1.0 - model.alpha) * float(b @ b) + model.alpha * float(
        np.abs(b).sum()
    )
    return 0.5 * float(r @ r) + model.lambda_ * penalty


def kkt_residual(model: EnetModel, X: ArrayLike, y: ArrayLike) -> float:
    Xs, r, b = _solver_view(model, X, y)
    intercept = abs(float(r.sum())) / r.size
    coords = _kkt(
        np.einsum("ij,ij->j", Xs, Xs), Xs.T @ r, b, model.lambda_, model.alpha
    )
    return max(intercept, coords)
