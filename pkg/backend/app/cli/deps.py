import logging
import time
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Annotated, Any

import typer
from pydantic import ValidationError

from app.core.config import settings
from app.core.exceptions import YieldLagError
from app.models import RunManifest
from app.storage import canonical_json, write_json
from app.utils import config_hash

logger = logging.getLogger(__name__)

MANIFEST_NAME = "run_manifest.json"


class ModelKind(str, Enum):
    ENET = "enet"
    GBT = "gbt"
    GAM = "gam"


class Rule(str, Enum):
    MIN = "min"
    ONE_SE = "one_se"


SeedOpt = Annotated[int, typer.Option("--seed", help="Seed for every random stream.")]
ThreadsOpt = Annotated[
    int, typer.Option("--threads", min=1, help="Worker threads; output never depends on it.")
]
OutOpt = Annotated[
    Path, typer.Option("--out", file_okay=False, help="Output directory.")
]
InputArg = Annotated[Path, typer.Argument(dir_okay=False)]


def parse_auto(value: str, *, name: str) -> float | None:
    """`auto` or a non-negative float."""
    if value.strip().lower() == "auto":
        return None
    try:
        number = float(value)
    except ValueError:
        raise typer.BadParameter(f"expected 'auto' or a number, got {value!r}", param_hint=name)
    if not number >= 0:
        raise typer.BadParameter(f"must be non-negative, got {value}", param_hint=name)
    return number


def tool_version() -> str:
    try:
        return version(settings.PROJECT_NAME)
    except PackageNotFoundError:
        return "0+unknown"


@dataclass
class RunContext:
    command: str
    seed: int
    threads: int
    out: Path
    inputs: dict[str, Path]
    config: dict[str, Any]
    outputs: list[Path] = field(default_factory=list)
    started: float = field(default_factory=time.perf_counter)

    def path(self, name: str) -> Path:
        return self.out / name

    def record(self, *paths: Path) -> None:
        self.outputs.extend(paths)

    def manifest(self) -> RunManifest:
        canonical = canonical_json(
            {"command": self.command, "seed": self.seed, "config": self.config}
        )
        return RunManifest(
            command=self.command,
            inputs={k: str(v) for k, v in self.inputs.items()},
            config_hash=config_hash(canonical),
            seed=self.seed,
            threads=self.threads,
            tool_version=tool_version(),
            outputs=[p.name for p in self.outputs],
            wall_clock_seconds=time.perf_counter() - self.started,
        )


@contextmanager
def run_command(
    command: str,
    *,
    seed: int,
    threads: int,
    out: Path,
    inputs: dict[str, Path] | None = None,
    config: dict[str, Any] | None = None,
) -> Iterator[RunContext]:
    """Run a command body, map library errors to exit codes, then write the manifest."""
    ctx = RunContext(
        command=command,
        seed=seed,
        threads=threads,
        out=out,
        inputs=inputs or {},
        config=config or {},
    )
    logger.info(f"{command}: seed={seed} threads={threads} out={out}")
    try:
        yield ctx
    except YieldLagError as exc:
        logger.error(f"{command} failed: {exc}")
        typer.echo(f"error: {exc}", err=True)
        raise typer.Exit(code=exc.exit_code)
    except ValidationError as exc:
        logger.error(f"{command} failed: {exc}")
        typer.echo(f"error: {exc}", err=True)
        raise typer.Exit(code=2)
    write_json(model=ctx.manifest(), path=ctx.path(MANIFEST_NAME))
