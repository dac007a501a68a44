from collections.abc import Generator
from pathlib import Path

import numpy as np
import pytest
from typer.testing import CliRunner

from app.core.config import settings
from app.models import Dataset, SynthTruth
from app.services import synth
from tests.utils.utils import synth_config


@pytest.fixture
def g() -> np.random.Generator:
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def synthetic() -> tuple[Dataset, SynthTruth]:
    return synth.generate_dataset(synth_config(n_plots=120, seed=11))


@pytest.fixture(scope="module")
def runner() -> CliRunner:
    return CliRunner()


@pytest.fixture
def fast_settings(monkeypatch: pytest.MonkeyPatch) -> Generator[None, None, None]:
    """Shorter lambda path and boosting grids for end-to-end command runs."""
    monkeypatch.setattr(settings, "ENET_N_LAMBDAS", 15)
    monkeypatch.setattr(settings, "ENET_LAMBDA_RATIO", 1e-2)
    monkeypatch.setattr(settings, "GBT_ROUNDS_GRID", [10, 20, 40])
    monkeypatch.setattr(settings, "GBT_DEPTH_GRID", [1, 3])
    yield


@pytest.fixture
def synth_file(tmp_path: Path) -> Path:
    path = tmp_path / "synth.json"
    path.write_text(synth_config(n_plots=50, seed=3).model_dump_json(), encoding="utf-8")
    return path
