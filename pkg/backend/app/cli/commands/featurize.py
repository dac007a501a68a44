from pathlib import Path

from app.cli.deps import InputArg, OutOpt, SeedOpt, ThreadsOpt, run_command
from app.core.config import settings
from app.services import features, ingest
from app.storage import read_weekly, write_dataset, write_skipped


def featurize(
    plots: InputArg,
    weekly: InputArg,
    seed: SeedOpt = settings.SEED,
    threads: ThreadsOpt = settings.THREADS,
    out: OutOpt = Path("."),
) -> None:
    """
    Build the 81-covariate dataset; plots without lag coverage go to skipped.csv.
    """
    with run_command(
        "featurize",
        seed=seed,
        threads=threads,
        out=out,
        inputs={"plots": plots, "weekly": weekly},
    ) as ctx:
        records = ingest.parse_plot_table(plots)
        store = read_weekly(path=weekly)
        result = features.build_dataset(records, store, threads=threads)
        ctx.record(
            write_dataset(dataset=result.dataset, path=ctx.path("dataset.csv")),
            write_skipped(skipped=result.skipped, path=ctx.path("skipped.csv")),
        )
