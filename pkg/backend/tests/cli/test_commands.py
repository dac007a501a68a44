import json
from pathlib import Path

import pandas as pd
import pytest
from typer.testing import CliRunner

from app.core.config import settings
from app.main import cli
from app.services import features
from tests.utils.utils import synth_config

MANIFEST = "run_manifest.json"


def invoke(runner: CliRunner, *args: str | Path, code: int = 0) -> str:
    result = runner.invoke(cli, [str(a) for a in args])
    assert result.exit_code == code, result.output
    return result.output


def pipeline_dataset(runner: CliRunner, synth: Path, root: Path) -> Path:
    invoke(runner, "simulate", synth, "--out", root / "sim")
    plots = root / "sim" / "plots.csv"
    invoke(runner, "interpolate", plots, root / "sim" / "series.csv", "--out", root / "w")
    invoke(runner, "featurize", plots, root / "w" / "weekly.csv", "--out", root / "d")
    return root / "d" / "dataset.csv"


def pipeline(runner: CliRunner, synth: Path, root: Path, *, threads: int = 1) -> Path:
    t = ["--threads", str(threads)]
    invoke(runner, "simulate", synth, "--out", root / "sim", *t)
    plots = root / "sim" / "plots.csv"
    invoke(runner, "interpolate", plots, root / "sim" / "series.csv", "--out", root / "weekly", *t)
    invoke(runner, "featurize", plots, root / "weekly" / "weekly.csv", "--out", root / "data", *t)
    dataset = root / "data" / "dataset.csv"
    invoke(runner, "fit", dataset, "--model", "enet", "--out", root / "enet", *t)
    invoke(runner, "report", root / "enet" / "model.json", "--svg", "--out", root / "report", *t)
    return dataset


@pytest.mark.usefixtures("fast_settings")
def test_pipeline(runner: CliRunner, synth_file: Path, tmp_path: Path) -> None:
    dataset = pipeline(runner, synth_file, tmp_path)

    frame = pd.read_csv(dataset)
    assert list(frame.columns) == ["plot_id", *features.column_names(), "prod_hect"]
    assert len(frame) == 50
    assert pd.read_csv(tmp_path / "data" / "skipped.csv").empty

    enet = tmp_path / "enet"
    assert {p.name for p in enet.iterdir()} == {
        "model.json",
        "mse_table.csv",
        "split.json",
        "cv_curve.csv",
        MANIFEST,
    }
    split = json.loads((enet / "split.json").read_text(encoding="utf-8"))
    assert len(split["train"]) == 40
    assert sorted(split["train"] + split["test"]) == list(range(1, 51))
    curve = pd.read_csv(enet / "cv_curve.csv")
    assert list(curve.columns) == ["lambda", "mean_mse", "stderr_mse"]
    assert len(curve) == settings.ENET_N_LAMBDAS

    manifest = json.loads((enet / MANIFEST).read_text(encoding="utf-8"))
    assert manifest["command"] == "fit"
    assert manifest["seed"] == settings.SEED
    assert manifest["inputs"] == {"dataset": str(dataset)}
    assert set(manifest["outputs"]) == {"model.json", "mse_table.csv", "split.json", "cv_curve.csv"}

    report = tmp_path / "report"
    lag = pd.read_csv(report / "lag_report.csv")
    assert len(lag) == 72
    assert len(list(report.glob("lag_*.svg"))) == 6


@pytest.mark.slow
@pytest.mark.usefixtures("fast_settings")
def test_reruns_are_byte_identical(runner: CliRunner, synth_file: Path, tmp_path: Path) -> None:
    pipeline(runner, synth_file, tmp_path / "one", threads=1)
    pipeline(runner, synth_file, tmp_path / "four", threads=4)
    first = sorted(
        p.relative_to(tmp_path / "one")
        for p in (tmp_path / "one").rglob("*")
        if p.is_file() and p.name != MANIFEST
    )
    assert len(first) > 10
    for rel in first:
        assert (tmp_path / "one" / rel).read_bytes() == (tmp_path / "four" / rel).read_bytes(), rel


def test_same_config_hash_for_same_run(runner: CliRunner, synth_file: Path, tmp_path: Path) -> None:
    invoke(runner, "simulate", synth_file, "--out", tmp_path / "a")
    invoke(runner, "simulate", synth_file, "--out", tmp_path / "b", "--threads", "2")
    a = json.loads((tmp_path / "a" / MANIFEST).read_text(encoding="utf-8"))
    b = json.loads((tmp_path / "b" / MANIFEST).read_text(encoding="utf-8"))
    assert a["config_hash"] == b["config_hash"]
    assert a["seed"] == 3
    c_out = tmp_path / "c"
    invoke(runner, "simulate", synth_file, "--out", c_out, "--seed", "4")
    c = json.loads((c_out / MANIFEST).read_text(encoding="utf-8"))
    assert c["seed"] == 4
    assert c["config_hash"] != a["config_hash"]


def test_missing_input_exits_2(runner: CliRunner, tmp_path: Path) -> None:
    missing = tmp_path / "nope.csv"
    output = invoke(runner, "featurize", missing, missing, "--out", tmp_path, code=2)
    assert str(missing) in output
    assert not (tmp_path / MANIFEST).exists()


def test_unknown_model_exits_2(runner: CliRunner, tmp_path: Path) -> None:
    invoke(runner, "fit", tmp_path / "dataset.csv", "--model", "bogus", code=2)
    invoke(runner, "fit", tmp_path / "dataset.csv", "--model", "enet", "--lambda", "-1", code=2)


def test_invalid_synth_config_exits_2(runner: CliRunner, tmp_path: Path) -> None:
    bad = tmp_path / "synth.json"
    bad.write_text(json.dumps({"n_plots": 5, "noise_sd": -1}), encoding="utf-8")
    output = invoke(runner, "simulate", bad, "--out", tmp_path, code=2)
    assert "noise_sd" in output


def test_empty_plot_table(runner: CliRunner, synth_file: Path, tmp_path: Path) -> None:
    invoke(runner, "simulate", synth_file, "--out", tmp_path / "sim")
    plots = tmp_path / "empty.csv"
    header = (tmp_path / "sim" / "plots.csv").read_text(encoding="utf-8").splitlines()[0]
    plots.write_text(header + "\n", encoding="utf-8")
    invoke(runner, "interpolate", plots, tmp_path / "sim" / "series.csv", "--out", tmp_path / "w")
    invoke(runner, "featurize", plots, tmp_path / "w" / "weekly.csv", "--out", tmp_path / "d")
    frame = pd.read_csv(tmp_path / "d" / "dataset.csv")
    assert frame.empty
    assert len(frame.columns) == 83


@pytest.fixture
def dataset(runner: CliRunner, synth_file: Path, tmp_path: Path) -> Path:
    return pipeline_dataset(runner, synth_file, tmp_path)


def test_fit_gbt_and_report_rejects_it(runner: CliRunner, dataset: Path, tmp_path: Path) -> None:
    out = tmp_path / "gbt"
    invoke(runner, "fit", dataset, "--model", "gbt", "--rounds", "20", "--out", out)
    mse = pd.read_csv(out / "mse_table.csv")
    assert mse["model"].tolist() == ["gbt"]
    assert not (out / "cv_rounds.csv").exists()
    model = json.loads((out / "model.json").read_text(encoding="utf-8"))
    assert model["kind"] == "gbt"
    assert len(model["trees"]) == 20
    output = invoke(runner, "report", out / "model.json", "--out", tmp_path / "r", code=2)
    assert "elastic-net" in output


def test_fixed_lambda_that_cannot_converge_exits_3(
    runner: CliRunner, dataset: Path, tmp_path: Path, monkeypatch: pytest.MonkeyPatch
) -> None:
    monkeypatch.setattr(settings, "ENET_MAX_SWEEPS", 1)
    output = invoke(
        runner, "fit", dataset, "--model", "enet", "--lambda", "0.001", "--out", tmp_path, code=3
    )
    assert "did not converge" in output


def test_cv_gbt(runner: CliRunner, dataset: Path, tmp_path: Path) -> None:
    out = tmp_path / "cv"
    invoke(
        runner,
        "cv",
        dataset,
        "--model",
        "gbt",
        "--rounds",
        "10",
        "--rounds",
        "20",
        "--gamma",
        "0",
        "--gamma",
        "0.5",
        "--l2",
        "1",
        "--max-depth",
        "2",
        "--out",
        out,
    )
    rounds = pd.read_csv(out / "cv_rounds.csv")
    assert rounds["n_rounds"].tolist() == [10, 20]
    grid = pd.read_csv(out / "cv_grid.csv")
    assert grid["gamma"].tolist() == [0.0, 0.5]
    assert set(grid["n_rounds"]) <= {10, 20}


@pytest.mark.usefixtures("fast_settings")
def test_cv_enet(runner: CliRunner, dataset: Path, tmp_path: Path) -> None:
    invoke(runner, "cv", dataset, "--model", "enet", "--n-lambdas", "8", "--out", tmp_path / "cv")
    assert len(pd.read_csv(tmp_path / "cv" / "cv_curve.csv")) == 8


def test_cv_gam_exits_2(runner: CliRunner, dataset: Path, tmp_path: Path) -> None:
    invoke(runner, "cv", dataset, "--model", "gam", "--out", tmp_path / "cv", code=2)


@pytest.mark.usefixtures("fast_settings")
def test_eval_writes_three_rows(runner: CliRunner, tmp_path: Path) -> None:
    synth = tmp_path / "synth.json"
    synth.write_text(synth_config(n_plots=120, seed=5).model_dump_json(), encoding="utf-8")
    data = pipeline_dataset(runner, synth, tmp_path)
    invoke(runner, "eval", data, "--out", tmp_path / "eval")
    table = pd.read_csv(tmp_path / "eval" / "mse_table.csv")
    assert table["model"].tolist() == ["enet", "gbt", "gam"]
    assert (table[["train", "validation"]] >= 0).all().all()
