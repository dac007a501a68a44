import logging

import sentry_sdk

from app.cli.main import cli
from app.core.config import settings

logging.basicConfig(level=settings.LOG_LEVEL)

if settings.SENTRY_DSN and settings.ENVIRONMENT != "local":
    sentry_sdk.init(dsn=str(settings.SENTRY_DSN))

__all__ = ["cli"]

if __name__ == "__main__":
    cli()
