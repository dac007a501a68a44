import logging
from pathlib import Path

from app.cli.deps import InputArg, OutOpt, SeedOpt, ThreadsOpt, run_command
from app.core.config import settings
from app.services import ingest, timeseries
from app.storage import write_weekly

logger = logging.getLogger(__name__)


def interpolate(
    plots: InputArg,
    series: InputArg,
    seed: SeedOpt = settings.SEED,
    threads: ThreadsOpt = settings.THREADS,
    out: OutOpt = Path("."),
) -> None:
    """
    Resample every raw series of the known plots onto the weekly grid.
    """
    with run_command(
        "interpolate",
        seed=seed,
        threads=threads,
        out=out,
        inputs={"plots": plots, "series": series},
    ) as ctx:
        known = {p.id for p in ingest.parse_plot_table(plots)}
        raw = ingest.parse_series(series)
        kept = [s for s in raw if s.plot_id in known]
        if len(kept) < len(raw):
            logger.warning(
                f"ignoring {len(raw) - len(kept)} series for plots not in {plots}"
            )
        weekly = timeseries.interpolate_all(kept)
        ctx.record(write_weekly(series=weekly, path=ctx.path("weekly.csv")))
