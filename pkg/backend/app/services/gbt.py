"""
Regularized gradient tree boosting for squared error with exact greedy splits.

For squared error the gradient statistics reduce to G = sum of residuals and
H = row count, so a split of a node scores

    gain = 0.5 * (GL^2 / (HL + lambda) + GR^2 / (HR + lambda) - G^2 / (H + lambda)) - gamma

and a leaf carries weight G / (H + lambda).
"""
import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from app.core.exceptions import InputValidationError, NumericalError
from app.models import FeatureVector, GbtConfig, Tree, TreeEnsemble, TreeNode

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float


@dataclass(frozen=True)
class _FlatTree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: int


def split_gain(
    GL: np.ndarray | float,
    HL: np.ndarray | float,
    G: float,
    H: float,
    gamma: float,
    lam: float,
) -> np.ndarray | float:
    GR = G - GL
    HR = H - HL
    return 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - G * G / (H + lam)) - gamma


def leaf_weight(residuals: np.ndarray, lam: float) -> float:
    return float(residuals.sum()) / (residuals.size + lam)


def best_split(X: np.ndarray, residuals: np.ndarray, cfg: GbtConfig) -> Split | None:
    """Exact greedy search over every feature and every distinct-value midpoint.

    Ties go to the lowest feature index, then the lowest threshold.
    """
    n = X.shape[0]
    if n < 2:
        return None
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    gs = residuals[order]
    G = float(residuals.sum())
    GL = np.cumsum(gs, axis=0)[:-1]
    HL = np.arange(1, n, dtype=float)[:, None]
    gain = np.asarray(split_gain(GL, HL, G, float(n), cfg.gamma, cfg.lambda_))
    distinct = xs[1:] > xs[:-1]
    gain = np.where(distinct, gain, -np.inf)
    # Feature-major flattening: argmax returns the first maximum in (feature, threshold) order
    flat = gain.T.ravel()
    k = int(np.argmax(flat))
    best = float(flat[k])
    if not best > 0:
        return None
    feature, pos = divmod(k, n - 1)
    threshold = 0.5 * (xs[pos, feature] + xs[pos + 1, feature])
    return Split(feature=feature, threshold=float(threshold), gain=best)


def _grow(
    X: np.ndarray, residuals: np.ndarray, cfg: GbtConfig, depth: int
) -> tuple[TreeNode, int, int]:
    split = best_split(X, residuals, cfg) if depth < cfg.max_depth else None
    if split is None:
        return TreeNode(leaf_weight=leaf_weight(residuals, cfg.lambda_)), 1, depth
    go_left = X[:, split.feature] < split.threshold
    left, left_leaves, left_depth = _grow(X[go_left], residuals[go_left], cfg, depth + 1)
    right, right_leaves, right_depth = _grow(
        X[~go_left], residuals[~go_left], cfg, depth + 1
    )
    node = TreeNode(
        feature=split.feature, threshold=split.threshold, left=left, right=right
    )
    return node, left_leaves + right_leaves, max(left_depth, right_depth)


def fit_tree(X: ArrayLike, residuals: ArrayLike, cfg: GbtConfig | None = None) -> Tree:
    cfg = cfg or GbtConfig()
    Xa = np.atleast_2d(np.asarray(X, dtype=float))
    r = np.asarray(residuals, dtype=float)
    if r.ndim != 1 or Xa.shape[0] != r.size or r.size < 1:
        raise InputValidationError(
            f"design {Xa.shape} and residuals {r.shape} do not agree"
        )
    if not (np.all(np.isfinite(Xa)) and np.all(np.isfinite(r))):
        raise InputValidationError("design and residuals must be finite")
    root, n_leaves, depth = _grow(Xa, r, cfg, 0)
    return Tree(root=root, n_leaves=n_leaves, depth=depth)


def _flatten(tree: Tree) -> _FlatTree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    stack: list[tuple[TreeNode, int]] = []

    def push(node: TreeNode) -> int:
        idx = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        stack.append((node, idx))
        return idx

    push(tree.root)
    while stack:
        node, idx = stack.pop()
        if node.is_leaf:
            value[idx] = float(node.leaf_weight or 0.0)
            continue
        if node.left is None or node.right is None or node.feature is None:
            raise InputValidationError("internal tree node without two children")
        feature[idx] = node.feature
        threshold[idx] = float(node.threshold or 0.0)
        left[idx] = push(node.left)
        right[idx] = push(node.right)
    return _FlatTree(
        feature=np.asarray(feature),
        threshold=np.asarray(threshold),
        left=np.asarray(left),
        right=np.asarray(right),
        value=np.asarray(value),
        depth=tree.depth,
    )


def _compiled(tree: Tree) -> _FlatTree:
    if tree._flat is None:
        tree._flat = _flatten(tree)
    flat: _FlatTree = tree._flat
    return flat


def leaf_index(tree: Tree, X: np.ndarray) -> np.ndarray:
    """Flat index of the leaf each row of X lands in."""
    flat = _compiled(tree)
    node = np.zeros(X.shape[0], dtype=int)
    rows = np.arange(X.shape[0])
    for _ in range(flat.depth):
        f = flat.feature[node]
        internal = f >= 0
        if not internal.any():
            break
        r, n = rows[internal], node[internal]
        go_left = X[r, f[internal]] < flat.threshold[n]
        node[internal] = np.where(go_left, flat.left[n], flat.right[n])
    return node


def predict_tree(tree: Tree, X: np.ndarray) -> np.ndarray:
    return _compiled(tree).value[leaf_index(tree, X)]


def _check_ensemble_inputs(ens: TreeEnsemble, X: ArrayLike) -> np.ndarray:
    Xa = np.atleast_2d(np.asarray(X, dtype=float))
    if Xa.shape[1] != len(ens.column_names):
        raise InputValidationError(
            f"ensemble trained on {len(ens.column_names)} columns, got {Xa.shape[1]}"
        )
    return Xa


def _staged(ens: TreeEnsemble, X: np.ndarray) -> np.ndarray:
    """Predictions after 0, 1, ..., K rounds, shape (K + 1, N)."""
    stages = np.empty((len(ens.trees) + 1, X.shape[0]))
    stages[0] = ens.base_score
    for k, tree in enumerate(ens.trees, start=1):
        stages[k] = stages[k - 1] + ens.learning_rate * predict_tree(tree, X)
    return stages


def fit_ensemble(
    X: ArrayLike,
    y: ArrayLike,
    cfg: GbtConfig | None = None,
    *,
    column_names: Sequence[str] | None = None,
) -> TreeEnsemble:
    cfg = cfg or GbtConfig()
    Xa = np.atleast_2d(np.asarray(X, dtype=float))
    ya = np.asarray(y, dtype=float)
    if ya.ndim != 1 or Xa.shape[0] != ya.size:
        raise InputValidationError(f"design {Xa.shape} and response {ya.shape} do not agree")
    if ya.size < 2:
        raise InputValidationError(f"at least 2 rows required, got {ya.size}")
    if not (np.all(np.isfinite(Xa)) and np.all(np.isfinite(ya))):
        raise InputValidationError("design and response must be finite")
    names = list(column_names) if column_names is not None else [
        f"x{j}" for j in range(Xa.shape[1])
    ]
    if len(names) != Xa.shape[1]:
        raise InputValidationError(f"{len(names)} column names for {Xa.shape[1]} columns")

    base = float(ya.mean()) if cfg.base_score is None else cfg.base_score
    prediction = np.full(ya.size, base)
    trees: list[Tree] = []
    trace: list[float] = []
    last = float(np.mean((ya - prediction) ** 2))
    for k in range(cfg.n_rounds):
        tree = fit_tree(Xa, ya - prediction, cfg)
        prediction = prediction + cfg.learning_rate * predict_tree(tree, Xa)
        current = float(np.mean((ya - prediction) ** 2))
        if current > last + 1e-12 * max(1.0, last):
            raise NumericalError(f"training MSE increased at round {k + 1}: {last!r} -> {current!r}")
        trees.append(tree)
        trace.append(current)
        last = current
    logger.info(
        f"boosted {len(trees)} trees (gamma={cfg.gamma}, lambda={cfg.lambda_}, "
        f"depth={cfg.max_depth}, eta={cfg.learning_rate}), training MSE {last:.6g}"
    )
    return TreeEnsemble(
        base_score=base,
        learning_rate=cfg.learning_rate,
        config=cfg,
        column_names=names,
        trees=trees,
        train_mse=trace,
    )


def predict_batch(ens: TreeEnsemble, X: ArrayLike) -> np.ndarray:
    Xa = _check_ensemble_inputs(ens, X)
    total = np.full(Xa.shape[0], ens.base_score)
    for tree in ens.trees:
        total += ens.learning_rate * predict_tree(tree, Xa)
    return total


def predict(ens: TreeEnsemble, x: FeatureVector | ArrayLike) -> float:
    row = x.as_array() if isinstance(x, FeatureVector) else np.asarray(x, dtype=float)
    if row.ndim != 1:
        raise InputValidationError("predict takes a single row; use predict_batch")
    return float(predict_batch(ens, row[None, :])[0])


def staged_mse(ens: TreeEnsemble, X: ArrayLike, y: ArrayLike) -> np.ndarray:
    """MSE on (X, y) after each round; entry k - 1 is the MSE of the first k trees."""
    Xa = _check_ensemble_inputs(ens, X)
    ya = np.asarray(y, dtype=float)
    stages = _staged(ens, Xa)
    return np.mean((stages[1:] - ya) ** 2, axis=1)


def truncate(ens: TreeEnsemble, n_rounds: int) -> TreeEnsemble:
    if not 0 <= n_rounds <= len(ens.trees):
        raise InputValidationError(
            f"cannot keep {n_rounds} of {len(ens.trees)} rounds"
        )
    return ens.model_copy(
        update={
            "trees": ens.trees[:n_rounds],
            "train_mse": ens.train_mse[:n_rounds],
            "config": ens.config.model_copy(update={"n_rounds": n_rounds}),
        }
    )
