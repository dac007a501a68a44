import json
from pathlib import Path

import numpy as np
import pytest

from app.core.exceptions import InputValidationError
from app.models import (
    CvCurve,
    Dataset,
    EnetModel,
    GbtConfig,
    MseRow,
    TreeEnsemble,
    Variable,
)
from app.services import features, gbt
from app.storage import (
    atomic_write_text,
    canonical_json,
    read_dataset,
    read_model,
    read_weekly,
    write_cv_curve,
    write_dataset,
    write_model,
    write_mse_table,
    write_weekly,
)
from tests.utils.utils import weekly


def test_atomic_write_leaves_no_temp_files(tmp_path: Path) -> None:
    target = tmp_path / "nested" / "out.txt"
    atomic_write_text(target, "first")
    atomic_write_text(target, "second")
    assert target.read_text(encoding="utf-8") == "second"
    assert [p.name for p in target.parent.iterdir()] == ["out.txt"]


def test_floats_survive_csv(tmp_path: Path, g: np.random.Generator) -> None:
    columns = features.column_names()
    X = g.standard_normal((4, len(columns))) * 1e-3
    X[0, 0] = 1 / 3
    y = np.array([0.1, 2.0 / 7.0, 5e-300, 123456.789])
    D = Dataset(X=X, y=y, plot_ids=[3, 1, 8, 2], columns=columns)
    path = write_dataset(dataset=D, path=tmp_path / "dataset.csv")
    header = path.read_text(encoding="utf-8").splitlines()[0].split(",")
    assert header[0] == "plot_id"
    assert header[-1] == "prod_hect"
    assert len(header) == 83
    back = read_dataset(path=path, columns=columns)
    np.testing.assert_array_equal(back.X, X)
    np.testing.assert_array_equal(back.y, y)
    assert back.plot_ids == [3, 1, 8, 2]


def test_read_dataset_checks_header(tmp_path: Path) -> None:
    path = tmp_path / "dataset.csv"
    path.write_text("plot_id,a,prod_hect\n1,2,3\n", encoding="utf-8")
    with pytest.raises(InputValidationError, match="header"):
        read_dataset(path=path, columns=features.column_names())
    with pytest.raises(InputValidationError, match="not found"):
        read_dataset(path=tmp_path / "missing.csv", columns=["a"])


def test_weekly_round_trip(tmp_path: Path) -> None:
    series = [
        weekly([0.1, 0.2, 0.3], start_week=2500, plot_id=2),
        weekly([20.0, 21.5], start_week=2499, plot_id=1, variable=Variable.TEMP),
    ]
    path = write_weekly(series=series, path=tmp_path / "weekly.csv")
    store = read_weekly(path=path)
    assert store[(2, Variable.NDVI)] == series[0]
    assert store[(1, Variable.TEMP)] == series[1]


def test_weekly_gaps_are_rejected(tmp_path: Path) -> None:
    path = tmp_path / "weekly.csv"
    path.write_text(
        "plot_id,variable,week,value\n1,NDVI,10,0.1\n1,NDVI,12,0.2\n", encoding="utf-8"
    )
    with pytest.raises(InputValidationError, match="gaps"):
        read_weekly(path=path)


def test_read_model_dispatches_on_kind(tmp_path: Path, g: np.random.Generator) -> None:
    X = g.standard_normal((30, 3))
    ens = gbt.fit_ensemble(X, X[:, 0], GbtConfig(n_rounds=3, max_depth=2))
    path = write_model(model=ens, path=tmp_path / "model.json")
    back = read_model(path=path)
    assert isinstance(back, TreeEnsemble)
    np.testing.assert_array_equal(gbt.predict_batch(back, X), gbt.predict_batch(ens, X))

    enet = EnetModel(
        alpha=0.5,
        lambda_=1.0,
        beta0=0.25,
        beta=[0.1],
        column_names=["x0"],
        kkt_residual=0.0,
        n_sweeps=2,
        standardized=True,
        beta_std=[0.2],
        x_mean=[0.0],
        x_scale=[2.0],
    )
    path = write_model(model=enet, path=tmp_path / "enet.json")
    assert '"lambda": 1.0' in path.read_text(encoding="utf-8")
    assert read_model(path=path) == enet


def test_read_model_rejects_other_json(tmp_path: Path) -> None:
    path = tmp_path / "model.json"
    path.write_text(json.dumps({"kind": "forest"}), encoding="utf-8")
    with pytest.raises(InputValidationError, match="not a fitted model"):
        read_model(path=path)


def test_tables(tmp_path: Path) -> None:
    curve = CvCurve(grid=[2.0, 1.0], mean_mse=[1.5, 1.25], stderr_mse=[0.1, 0.2], n_folds=5, seed=1)
    text = write_cv_curve(curve=curve, path=tmp_path / "cv.csv").read_text(encoding="utf-8")
    assert text == "lambda,mean_mse,stderr_mse\n2,1.5,0.10000000000000001\n1,1.25,0.20000000000000001\n"
    rows = [MseRow(model="enet", train=0.5, validation=0.75)]
    text = write_mse_table(rows=rows, path=tmp_path / "mse.csv").read_text(encoding="utf-8")
    assert text == "model,train,validation\nenet,0.5,0.75\n"


def test_canonical_json_is_order_free() -> None:
    assert canonical_json({"b": 1, "a": [1, 2]}) == canonical_json({"a": [1, 2], "b": 1})
    assert canonical_json({"b": 1, "a": 2}) == '{"a":2,"b":1}'
