"""Exceptions raised by the AnomalyFilter package."""
from __future__ import annotations

from collections.abc import Sequence


class AnomalyFilterError(Exception):
    """Base error; `category` is the machine-parsable kind reported by the CLI."""

    category = "error"
    exit_code = 1


class ShapeError(AnomalyFilterError, ValueError):
    """Operand shapes do not conform."""

    category = "shape"
    exit_code = 4


class ConfigError(AnomalyFilterError, ValueError):
    """One or more configuration values are invalid."""

    category = "config"
    exit_code = 2

    def __init__(self, problems: Sequence[str] | str) -> None:
        """Initialize with every violation found."""
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DataError(AnomalyFilterError, ValueError):
    """Input data is malformed or inconsistent."""

    category = "data"
    exit_code = 3

    def __init__(self, message: str, row: int | None = None) -> None:
        """Initialize, remembering the offending row when known."""
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class CheckpointError(AnomalyFilterError):
    """A checkpoint cannot be read or does not match the run configuration."""

    category = "checkpoint"
    exit_code = 5


class TrainingError(AnomalyFilterError, FloatingPointError):
    """Training diverged."""

    category = "training"
    exit_code = 6

    def __init__(
        self,
        message: str,
        epoch: int | None = None,
        batch: int | None = None,
        steps: Sequence[int] | None = None,
    ) -> None:
        """Initialize with the position at which training failed."""
        self.epoch = epoch
        self.batch = batch
        self.steps = list(steps) if steps is not None else None
        details = []
        if epoch is not None:
            details.append(f"epoch={epoch}")
        if batch is not None:
            details.append(f"batch={batch}")
        if self.steps is not None:
            details.append(f"t={self.steps}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)


class MetricError(AnomalyFilterError, ValueError):
    """Labels do not support the requested metric."""

    category = "metric"
    exit_code = 7
