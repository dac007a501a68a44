from collections.abc import Sequence
from typing import Any


class YieldLagError(Exception):
    """Base error; `exit_code` is what the CLI returns for it."""

    exit_code = 2


class InputValidationError(YieldLagError, ValueError):
    def __init__(
        self, message: str, *, row: int | None = None, field: str | None = None
    ) -> None:
        self.row = row
        self.field = field
        prefix = f"row {row}: " if row is not None else ""
        super().__init__(f"{prefix}{message}")


class UndefinedInputError(InputValidationError):
    pass


class ConfigError(YieldLagError, ValueError):
    pass


class CoverageError(YieldLagError):
    def __init__(
        self, message: str, *, plot_id: int | None = None, weeks: Sequence[int] = ()
    ) -> None:
        self.plot_id = plot_id
        self.weeks = list(weeks)
        super().__init__(message)


class LayoutError(YieldLagError):
    def __init__(self, message: str, *, unmatched: Sequence[str] = ()) -> None:
        self.unmatched = list(unmatched)
        super().__init__(message)


class NumericalError(YieldLagError):
    exit_code = 3


class ConvergenceError(NumericalError):
    def __init__(
        self,
        message: str,
        *,
        beta0: float,
        beta: Any,
        kkt_residual: float,
        n_sweeps: int,
    ) -> None:
        self.beta0 = beta0
        self.beta = beta
        self.kkt_residual = kkt_residual
        self.n_sweeps = n_sweeps
        super().__init__(message)


class SingularSystemError(NumericalError):
    def __init__(self, message: str, *, term: str | None = None) -> None:
        self.term = term
        super().__init__(message)
