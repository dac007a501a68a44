import typer

from app.cli.commands import cv, evaluate, featurize, fit, interpolate, report, simulate
from app.core.config import settings

cli = typer.Typer(
    name=settings.PROJECT_NAME,
    help="Yield forecasting from weekly remote-sensing lag features.",
    no_args_is_help=True,
    add_completion=False,
)
cli.command("interpolate")(interpolate.interpolate)
cli.command("featurize")(featurize.featurize)
cli.command("fit")(fit.fit)
cli.command("cv")(cv.cv)
cli.command("report")(report.report)
cli.command("simulate")(simulate.simulate)
cli.command("eval")(evaluate.evaluate)
