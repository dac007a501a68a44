from collections.abc import Iterator

import numpy as np
import pytest

from app.core.exceptions import InputValidationError
from app.models import GbtConfig, TreeNode
from app.services import gbt
from tests.utils.oracles import brute_force_split

X4 = np.array([[1.0], [2.0], [3.0], [4.0]])
Y4 = np.array([0.0, 0.0, 10.0, 10.0])


def test_leaf_weight() -> None:
    assert gbt.leaf_weight(np.array([1.0, 2.0, 3.0]), 3.0) == 1.0
    assert gbt.leaf_weight(np.array([1.0]), 1.0) == 0.5


def test_four_point_split() -> None:
    cfg = GbtConfig(gamma=0.0, lambda_=0.0, max_depth=1)
    r = Y4 - Y4.mean()
    split = gbt.best_split(X4, r, cfg)
    assert split is not None
    assert split.feature == 0
    assert split.threshold == 2.5
    assert split.gain == pytest.approx(50.0)

    tree = gbt.fit_tree(X4, Y4, cfg)
    assert tree.n_leaves == 2
    assert tree.depth == 1
    assert tree.root.left is not None and tree.root.right is not None
    assert tree.root.left.leaf_weight == 0.0
    assert tree.root.right.leaf_weight == 10.0


def test_threshold_routes_equal_values_right() -> None:
    cfg = GbtConfig(gamma=0.0, lambda_=0.0, max_depth=1)
    tree = gbt.fit_tree(X4, Y4, cfg)
    np.testing.assert_array_equal(gbt.predict_tree(tree, np.array([[2.4999], [2.5]])), [0, 10])


def test_matches_brute_force(g: np.random.Generator) -> None:
    for _ in range(200):
        n = int(g.integers(2, 25))
        p = int(g.integers(1, 5))
        # Small integer grids produce ties in both values and gains
        X = g.integers(0, 6, size=(n, p)).astype(float)
        r = g.standard_normal(n).round(2)
        gamma = float(g.choice([0.0, 0.05, 0.5]))
        lam = float(g.choice([0.0, 0.6, 2.0]))
        found = gbt.best_split(X, r, GbtConfig(gamma=gamma, lambda_=lam))
        expected = brute_force_split(X, r, gamma, lam)
        if expected is None:
            assert found is None
            continue
        assert found is not None
        assert (found.feature, found.threshold, found.gain) == expected


def test_tie_breaks_on_lowest_feature() -> None:
    X = np.column_stack([X4[:, 0], X4[:, 0]])
    split = gbt.best_split(X, Y4 - 5.0, GbtConfig(gamma=0.0, lambda_=0.0))
    assert split is not None
    assert split.feature == 0


def test_large_gamma_keeps_a_single_leaf() -> None:
    tree = gbt.fit_tree(X4, Y4 - 5.0, GbtConfig(gamma=1e6))
    assert tree.n_leaves == 1
    assert tree.depth == 0
    assert tree.root.is_leaf


def test_zero_rounds_predicts_base_score() -> None:
    ens = gbt.fit_ensemble(X4, Y4, GbtConfig(n_rounds=0))
    assert ens.trees == []
    np.testing.assert_array_equal(gbt.predict_batch(ens, X4), 5.0)


def test_one_full_step_fits_exactly() -> None:
    cfg = GbtConfig(gamma=0.0, lambda_=0.0, max_depth=1, n_rounds=1, learning_rate=1.0)
    ens = gbt.fit_ensemble(X4, Y4, cfg)
    np.testing.assert_allclose(gbt.predict_batch(ens, X4), Y4)
    assert ens.train_mse == [0.0]


def test_batch_matches_single_row(g: np.random.Generator) -> None:
    X = g.standard_normal((60, 5))
    y = X[:, 0] ** 2 + np.sin(X[:, 1]) + 0.1 * g.standard_normal(60)
    ens = gbt.fit_ensemble(X, y, GbtConfig(n_rounds=15, max_depth=3))
    batch = gbt.predict_batch(ens, X)
    single = np.array([gbt.predict(ens, row) for row in X])
    np.testing.assert_array_equal(batch, single)


def test_training_mse_never_increases(g: np.random.Generator) -> None:
    X = g.standard_normal((80, 4))
    y = np.where(X[:, 2] > 0, 3.0, -1.0) + X[:, 0] + 0.2 * g.standard_normal(80)
    ens = gbt.fit_ensemble(X, y, GbtConfig(n_rounds=40, max_depth=2, lambda_=1.0))
    trace = np.asarray(ens.train_mse)
    assert trace.size == 40
    assert np.all(np.diff(trace) <= 1e-12)
    np.testing.assert_allclose(gbt.staged_mse(ens, X, y), trace, rtol=1e-12)


def test_truncate_equals_shorter_fit(g: np.random.Generator) -> None:
    X = g.standard_normal((50, 3))
    y = X @ np.array([1.0, -2.0, 0.5]) + 0.1 * g.standard_normal(50)
    long = gbt.fit_ensemble(X, y, GbtConfig(n_rounds=20, max_depth=2))
    short = gbt.fit_ensemble(X, y, GbtConfig(n_rounds=8, max_depth=2))
    cut = gbt.truncate(long, 8)
    assert cut.config.n_rounds == 8
    np.testing.assert_array_equal(gbt.predict_batch(cut, X), gbt.predict_batch(short, X))
    with pytest.raises(InputValidationError):
        gbt.truncate(long, 21)


def test_column_count_mismatch(g: np.random.Generator) -> None:
    X = g.standard_normal((20, 3))
    ens = gbt.fit_ensemble(X, X[:, 0], GbtConfig(n_rounds=2))
    with pytest.raises(InputValidationError):
        gbt.predict_batch(ens, X[:, :2])
    with pytest.raises(InputValidationError):
        gbt.fit_ensemble(X, X[:5, 0])


def test_huge_l2_penalty_returns_base_score(g: np.random.Generator) -> None:
    X = g.standard_normal((50, 3))
    y = 3.0 + X[:, 0] - 2.0 * X[:, 1] + 0.1 * g.standard_normal(50)
    ens = gbt.fit_ensemble(X, y, GbtConfig(lambda_=1e12, gamma=0.0, n_rounds=20, max_depth=3))
    assert ens.base_score == pytest.approx(float(y.mean()))
    np.testing.assert_allclose(gbt.predict_batch(ens, X), ens.base_score, rtol=0, atol=1e-8)
    far = 100.0 * g.standard_normal((10, 3))
    np.testing.assert_allclose(gbt.predict_batch(ens, far), ens.base_score, rtol=0, atol=1e-8)


def leaf_regions(
    node: TreeNode, path: tuple[tuple[int, float, bool], ...] = ()
) -> Iterator[tuple[tuple[tuple[int, float, bool], ...], float]]:
    """Every leaf with the (feature, threshold, goes_left) conditions leading to it."""
    if node.is_leaf:
        assert node.leaf_weight is not None
        yield path, node.leaf_weight
        return
    assert node.feature is not None and node.threshold is not None
    assert node.left is not None and node.right is not None
    yield from leaf_regions(node.left, (*path, (node.feature, node.threshold, True)))
    yield from leaf_regions(node.right, (*path, (node.feature, node.threshold, False)))


def test_every_row_reaches_exactly_one_leaf(g: np.random.Generator) -> None:
    X = g.standard_normal((80, 4)).round(1)
    y = np.where(X[:, 0] > 0, 2.0, -1.0) + X[:, 1] ** 2 + 0.1 * g.standard_normal(80)
    ens = gbt.fit_ensemble(X, y, GbtConfig(gamma=0.0, lambda_=0.5, max_depth=4, n_rounds=5))
    rows = np.vstack([X, 3.0 * g.standard_normal((40, 4))])
    for tree in ens.trees:
        regions = list(leaf_regions(tree.root))
        assert len(regions) == tree.n_leaves
        # Rows sitting exactly on each threshold
        on_edges = np.repeat(rows[:1], len(regions), axis=0)
        for i, (path, _) in enumerate(regions):
            if path:
                feature, threshold, _ = path[-1]
                on_edges[i, feature] = threshold
        checked = np.vstack([rows, on_edges])
        routed = gbt.predict_tree(tree, checked)
        for row, value in zip(checked, routed, strict=True):
            hits = [
                weight
                for path, weight in regions
                if all((row[f] < t) == left for f, t, left in path)
            ]
            assert len(hits) == 1
            assert value == hits[0]
