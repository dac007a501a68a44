"""
Semi-parametric additive model: linear controls plus one penalized cubic
regression spline per lag feature, with a shared smoothing parameter picked by
generalized cross-validation.

Each smooth uses the cardinal cubic regression spline basis (coefficients are
the function values at R quantile knots), a second-derivative penalty, a
sum-to-zero constraint on the training rows, and an eigen-reparametrisation
that makes the penalty diagonal. The unpenalized (linear) direction of every
smooth is checked for aliasing against the other unpenalized columns.
"""
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import solve, solve_triangular

from app.core.config import settings
from app.core.exceptions import (
    InputValidationError,
    NumericalError,
    SingularSystemError,
)
from app.models import CONTROL_FIELDS, Dataset, FeatureVector, GamModel, SmoothTerm

logger = logging.getLogger(__name__)

# Relative size below which an unpenalized column counts as aliased
ALIAS_TOL = 1e-8
# Relative size of an R diagonal entry that marks the penalized system singular
SINGULAR_TOL = 1e-12
# Slack on the [1, R] EDF range of a full smooth
EDF_TOL = 1e-8

Smoothing = float | Literal["auto"]


def _check_knots(knots: np.ndarray) -> np.ndarray:
    if knots.ndim != 1 or knots.size < 3:
        raise InputValidationError("a cubic regression spline needs at least 3 knots")
    if np.any(np.diff(knots) <= 0):
        raise InputValidationError("knots must be strictly increasing")
    return knots


def _band_matrices(knots: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h = np.diff(knots)
    r = knots.size
    D = np.zeros((r - 2, r))
    B = np.zeros((r - 2, r - 2))
    for i in range(r - 2):
        D[i, i] = 1.0 / h[i]
        D[i, i + 1] = -1.0 / h[i] - 1.0 / h[i + 1]
        D[i, i + 2] = 1.0 / h[i + 1]
        B[i, i] = (h[i] + h[i + 1]) / 3.0
        if i < r - 3:
            B[i, i + 1] = B[i + 1, i] = h[i + 1] / 6.0
    return D, B


def second_derivative_map(knots: ArrayLike) -> np.ndarray:
    """R x R matrix F with F @ beta = spline second derivatives at the knots."""
    k = _check_knots(np.asarray(knots, dtype=float))
    D, B = _band_matrices(k)
    F = np.zeros((k.size, k.size))
    F[1:-1] = solve(B, D, assume_a="sym")
    return F


def cr_penalty(knots: ArrayLike) -> np.ndarray:
    """Integrated squared second derivative as a quadratic form in the knot values."""
    k = _check_knots(np.asarray(knots, dtype=float))
    D, B = _band_matrices(k)
    S = D.T @ solve(B, D, assume_a="sym")
    return 0.5 * (S + S.T)


def cr_basis(knots: ArrayLike, x: ArrayLike) -> np.ndarray:
    """Cardinal cubic regression spline basis, linear beyond the boundary knots."""
    k = _check_knots(np.asarray(knots, dtype=float))
    xx = np.atleast_1d(np.asarray(x, dtype=float))
    F = second_derivative_map(k)
    r = k.size
    h = np.diff(k)
    eye = np.eye(r)

    j = np.clip(np.searchsorted(k, xx, side="right") - 1, 0, r - 2)
    hj = h[j]
    upper = k[j + 1] - xx
    lower = xx - k[j]
    am = upper / hj
    ap = lower / hj
    cm = (upper**3 / hj - hj * upper) / 6.0
    cp = (lower**3 / hj - hj * lower) / 6.0
    X = am[:, None] * eye[j] + ap[:, None] * eye[j + 1]
    X += cm[:, None] * F[j] + cp[:, None] * F[j + 1]

    below = xx < k[0]
    if below.any():
        slope = (eye[1] - eye[0]) / h[0] - h[0] / 3.0 * F[0] - h[0] / 6.0 * F[1]
        X[below] = eye[0] + (xx[below] - k[0])[:, None] * slope
    above = xx > k[-1]
    if above.any():
        slope = (eye[-1] - eye[-2]) / h[-1] + h[-1] / 6.0 * F[-2] + h[-1] / 3.0 * F[-1]
        X[above] = eye[-1] + (xx[above] - k[-1])[:, None] * slope
    return X


@dataclass(frozen=True)
class SmoothBasis:
    feature: int
    column: str
    kind: Literal["spline", "linear", "dropped"]
    knots: np.ndarray = field(default_factory=lambda: np.empty(0))
    # Knot-value basis -> constrained, penalty-diagonal basis (R x m)
    transform: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    penalty: np.ndarray = field(default_factory=lambda: np.empty(0))
    center: float = 0.0
    linear_aliased: bool = False

    @property
    def width(self) -> int:
        if self.kind == "spline":
            return int(self.transform.shape[1])
        return 1 if self.kind == "linear" else 0

    def design(self, x: ArrayLike) -> np.ndarray:
        xx = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind == "spline":
            return cr_basis(self.knots, xx) @ self.transform
        if self.kind == "linear":
            return (xx - self.center)[:, None]
        return np.empty((xx.size, 0))

    def without(self, col: int) -> "SmoothBasis":
        keep = [c for c in range(self.width) if c != col]
        if self.kind != "spline":
            return SmoothBasis(feature=self.feature, column=self.column, kind="dropped")
        return SmoothBasis(
            feature=self.feature,
            column=self.column,
            kind="spline",
            knots=self.knots,
            transform=self.transform[:, keep],
            penalty=self.penalty[keep],
            linear_aliased=True,
        )


def _quantile_knots(values: np.ndarray, rank: int) -> np.ndarray:
    unique = np.unique(values)
    return np.quantile(unique, np.linspace(0.0, 1.0, rank))


def build_smooth_basis(
    values: ArrayLike, rank: int = 5, *, feature: int = 0, column: str | None = None
) -> SmoothBasis:
    x = np.asarray(values, dtype=float)
    name = column if column is not None else f"w{feature}"
    if rank < 3:
        raise InputValidationError(f"basis rank must be at least 3, got {rank}")
    distinct = np.unique(x).size
    if distinct <= 1:
        return SmoothBasis(feature=feature, column=name, kind="dropped")
    if distinct < rank:
        logger.info(f"{name}: {distinct} distinct values, using a linear term")
        return SmoothBasis(
            feature=feature,
            column=name,
            kind="linear",
            penalty=np.zeros(1),
            center=float(x.mean()),
        )

    knots = _quantile_knots(x, rank)
    X = cr_basis(knots, x)
    S = cr_penalty(knots)

    # Sum-to-zero over training rows: Z spans the null space of 1'X
    constraint = X.sum(axis=0)[:, None]
    Q, _ = np.linalg.qr(constraint, mode="complete")
    Z = Q[:, 1:]
    Xc = X @ Z
    Sc = Z.T @ S @ Z
    Sc *= np.linalg.norm(Xc, np.inf) ** 2 / np.linalg.norm(Sc, 1)

    evals, U = np.linalg.eigh(0.5 * (Sc + Sc.T))
    evals = np.where(evals > 1e-10 * evals.max(), evals, 0.0)
    # Fix eigenvector signs so the basis is reproducible
    signs = np.sign(U[np.argmax(np.abs(U), axis=0), np.arange(U.shape[1])])
    U = U * signs
    return SmoothBasis(
        feature=feature,
        column=name,
        kind="spline",
        knots=knots,
        transform=Z @ U,
        penalty=evals,
    )


@dataclass
class _Design:
    X: np.ndarray
    penalty: np.ndarray
    owners: list[str]
    z_index: list[int]
    smooths: list[SmoothBasis]
    # (start, stop) columns of each smooth in X
    blocks: list[tuple[int, int]]


@dataclass
class _Solution:
    coef: np.ndarray
    fitted: np.ndarray
    edf: np.ndarray
    gcv: float
    rss: float


def _split_columns(columns: Sequence[str]) -> tuple[list[int], list[int]]:
    linear = [i for i, c in enumerate(columns) if c in CONTROL_FIELDS]
    smooth = [i for i, c in enumerate(columns) if c not in CONTROL_FIELDS]
    return linear, smooth


def _aliased(columns: list[np.ndarray]) -> list[int]:
    """Indices of columns lying in the span of the columns before them."""
    basis: list[np.ndarray] = []
    aliased: list[int] = []
    for i, col in enumerate(columns):
        norm = float(np.linalg.norm(col))
        residual = col.copy()
        for _ in range(2):
            for q in basis:
                residual -= (q @ residual) * q
        size = float(np.linalg.norm(residual))
        if norm == 0 or size <= ALIAS_TOL * norm:
            aliased.append(i)
            continue
        basis.append(residual / size)
    return aliased


def _assemble(D: Dataset, rank: int) -> tuple[_Design, list[str]]:
    linear, smooth_cols = _split_columns(D.columns)
    N = len(D)
    dropped_controls: list[str] = []
    z_index: list[int] = []
    for i in linear:
        if np.ptp(D.X[:, i]) == 0:
            dropped_controls.append(D.columns[i])
        else:
            z_index.append(i)

    smooths = [
        build_smooth_basis(D.X[:, i], rank, feature=k, column=D.columns[i])
        for k, i in enumerate(smooth_cols)
    ]

    # Unpenalized columns in design order: intercept, controls, smooth null directions
    free: list[np.ndarray] = [np.ones(N)]
    free += [D.X[:, i] for i in z_index]
    owners_free: list[tuple[int, int]] = []
    for s_idx, basis in enumerate(smooths):
        if basis.kind == "dropped":
            continue
        design = basis.design(D.X[:, smooth_cols[s_idx]])
        for c in np.flatnonzero(basis.penalty == 0):
            free.append(design[:, c])
            owners_free.append((s_idx, int(c)))
    aliased = _aliased(free)
    if 0 in aliased:
        raise SingularSystemError("intercept column is degenerate", term="intercept")
    for a in aliased:
        if a <= len(z_index):
            name = D.columns[z_index[a - 1]]
            raise SingularSystemError(f"control {name} is collinear", term=name)
    n_head = 1 + len(z_index)
    for a in sorted(aliased, reverse=True):
        s_idx, c = owners_free[a - n_head]
        logger.info(f"{smooths[s_idx].column}: linear direction aliased, removed")
        smooths[s_idx] = smooths[s_idx].without(c)

    blocks_X = [np.ones((N, 1)), D.X[:, z_index]]
    penalty = [np.zeros(1 + len(z_index))]
    owners = ["intercept", *(D.columns[i] for i in z_index)]
    blocks: list[tuple[int, int]] = []
    start = 1 + len(z_index)
    for basis, i in zip(smooths, smooth_cols, strict=True):
        blocks_X.append(basis.design(D.X[:, i]))
        penalty.append(basis.penalty if basis.width else np.empty(0))
        owners += [basis.column] * basis.width
        blocks.append((start, start + basis.width))
        start += basis.width
    design = _Design(
        X=np.hstack(blocks_X),
        penalty=np.concatenate(penalty),
        owners=owners,
        z_index=z_index,
        smooths=smooths,
        blocks=blocks,
    )
    return design, dropped_controls


def _solve(design: _Design, y: np.ndarray, lam: float) -> _Solution:
    X, s = design.X, design.penalty
    N, q = X.shape
    penalized = np.flatnonzero(s > 0)
    root = np.zeros((penalized.size, q))
    root[np.arange(penalized.size), penalized] = np.sqrt(lam * s[penalized])
    A = np.vstack([X, root])
    b = np.concatenate([y, np.zeros(penalized.size)])
    Q, R = np.linalg.qr(A)
    diag = np.abs(np.diag(R))
    bad = np.flatnonzero(diag <= SINGULAR_TOL * diag.max())
    if bad.size:
        term = design.owners[int(bad[0])]
        raise SingularSystemError(
            f"penalized system is singular at smoothing={lam:.3g} (term {term})", term=term
        )
    coef = solve_triangular(R, Q.T @ b)
    fitted = X @ coef
    rss = float(np.sum((y - fitted) ** 2))
    Rinv = solve_triangular(R, np.eye(q))
    p_inv_diag = np.sum(Rinv**2, axis=1)
    edf = 1.0 - lam * s * p_inv_diag
    trace = float(np.sum(Q[:N] ** 2))
    gcv = N * rss / (N - trace) ** 2 if trace < N else np.inf
    return _Solution(coef=coef, fitted=fitted, edf=edf, gcv=gcv, rss=rss)


def _to_model(
    D: Dataset,
    design: _Design,
    sol: _Solution,
    *,
    lam: float,
    rank: int,
    dropped_controls: list[str],
) -> GamModel:
    linear, _ = _split_columns(D.columns)
    theta = np.zeros(len(linear))
    for k, i in enumerate(design.z_index):
        theta[linear.index(i)] = sol.coef[1 + k]
    smooths: list[SmoothTerm] = []
    for basis, (start, stop) in zip(design.smooths, design.blocks, strict=True):
        edf = float(sol.edf[start:stop].sum())
        full = basis.kind != "dropped" and not basis.linear_aliased
        if full and not 1.0 - EDF_TOL <= edf <= rank + EDF_TOL:
            raise NumericalError(
                f"{basis.column}: EDF {edf:.6g} outside [1, {rank}] at smoothing={lam:.3g}"
            )
        smooths.append(
            SmoothTerm(
                feature=basis.feature,
                column=basis.column,
                kind=basis.kind,
                knots=basis.knots.tolist(),
                transform=basis.transform.tolist(),
                coef=sol.coef[start:stop].tolist(),
                center=basis.center,
                linear_aliased=basis.linear_aliased,
                edf=edf,
            )
        )
    model = GamModel(
        theta0=float(sol.coef[0]),
        theta=theta.tolist(),
        smooths=smooths,
        smoothing=lam,
        gcv_score=sol.gcv,
        rank=rank,
        column_names=list(D.columns),
        dropped_controls=dropped_controls,
    )
    model.fitted = predict_gam_batch(model, D.X).tolist()
    return model


def gcv_curve(
    D: Dataset, grid: Sequence[float], *, rank: int | None = None
) -> list[tuple[float, float, float]]:
    """(smoothing, GCV score, total EDF) for every grid value."""
    rank = rank or settings.GAM_RANK
    design, _ = _assemble(D, rank)
    out = []
    for lam in grid:
        sol = _solve(design, D.y, float(lam))
        out.append((float(lam), sol.gcv, float(sol.edf.sum())))
    return out


def fit_gam(
    D: Dataset,
    smoothing: Smoothing = "auto",
    *,
    rank: int | None = None,
    lambda_grid: Sequence[float] | None = None,
) -> GamModel:
    rank = rank or settings.GAM_RANK
    if len(D) < settings.GAM_MIN_ROWS:
        raise InputValidationError(
            f"additive model needs at least {settings.GAM_MIN_ROWS} rows, got {len(D)}"
        )
    if not (np.all(np.isfinite(D.X)) and np.all(np.isfinite(D.y))):
        raise InputValidationError("dataset contains non-finite values")
    design, dropped_controls = _assemble(D, rank)

    if smoothing == "auto":
        grid = sorted(lambda_grid or settings.gam_lambda_grid)
        best: tuple[float, _Solution] | None = None
        for lam in grid:
            sol = _solve(design, D.y, lam)
            # Strict improvement keeps the lowest smoothing on ties
            if best is None or sol.gcv < best[1].gcv:
                best = (lam, sol)
        if best is None:
            raise InputValidationError("empty smoothing grid")
        lam, sol = best
        logger.info(f"GCV selected smoothing={lam:.6g} (score {sol.gcv:.6g})")
    else:
        lam = float(smoothing)
        if lam < 0:
            raise InputValidationError(f"smoothing must be non-negative, got {lam}")
        sol = _solve(design, D.y, lam)

    logger.info(
        f"additive model: {design.X.shape[1]} coefficients, total EDF {sol.edf.sum():.3f}"
    )
    return _to_model(
        D, design, sol, lam=lam, rank=rank, dropped_controls=dropped_controls
    )


def _term_design(term: SmoothTerm, x: np.ndarray) -> np.ndarray:
    if term.kind == "spline":
        return cr_basis(term.knots, x) @ np.asarray(term.transform).reshape(
            len(term.knots), len(term.coef)
        )
    if term.kind == "linear":
        return (x - term.center)[:, None]
    return np.empty((x.size, 0))


def partial_effect(model: GamModel, j: int, values: ArrayLike) -> np.ndarray:
    """The fitted smooth of lag feature `j` evaluated at `values`."""
    terms = [t for t in model.smooths if t.feature == j]
    if not terms:
        raise InputValidationError(f"no smooth for feature {j}")
    term = terms[0]
    x = np.atleast_1d(np.asarray(values, dtype=float))
    if term.kind == "dropped" or not term.coef:
        return np.zeros(x.size)
    return _term_design(term, x) @ np.asarray(term.coef)


def predict_gam_batch(model: GamModel, X: ArrayLike) -> np.ndarray:
    Xa = np.atleast_2d(np.asarray(X, dtype=float))
    if Xa.shape[1] != len(model.column_names):
        raise InputValidationError(
            f"model trained on {len(model.column_names)} columns, got {Xa.shape[1]}"
        )
    linear, smooth_cols = _split_columns(model.column_names)
    out = model.theta0 + Xa[:, linear] @ np.asarray(model.theta)
    for term in model.smooths:
        if term.kind == "dropped" or not term.coef:
            continue
        x = Xa[:, smooth_cols[term.feature]]
        out = out + _term_design(term, x) @ np.asarray(term.coef)
    return out


def predict_gam(model: GamModel, x: FeatureVector | ArrayLike) -> float:
    row = x.as_array() if isinstance(x, FeatureVector) else np.asarray(x, dtype=float)
    if row.ndim != 1:
        raise InputValidationError("predict_gam takes a single row; use predict_gam_batch")
    return float(predict_gam_batch(model, row[None, :])[0])
