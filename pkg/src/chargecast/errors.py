"""Exception types shared across the package."""


class ChargecastError(Exception):
    """Base class for every error raised by this package."""


class CsvParseError(ChargecastError):
    """Malformed CSV input; carries the 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ValidationError(ChargecastError):
    """Data violates a documented invariant (negative demand, bad shape, ...)."""


class EmptyDatasetError(ChargecastError):
    """An operation requires at least one site and got none."""


class SplitError(ChargecastError):
    """Train/test partitioning is impossible (fewer than 2 sites)."""


class InsufficientDataError(ChargecastError):
    """A series is too short for the requested computation."""


class EmptyClusterError(ChargecastError):
    """A cluster-level aggregate was requested for a memberless cluster."""


class ModelCorruptError(ChargecastError):
    """Forecaster parameters contain non-finite values."""


class TrainingError(ChargecastError):
    """Training could not run or diverged; the message names the step."""


class EvaluationError(ChargecastError):
    """Evaluation had no usable test sites."""


class ConfigError(ChargecastError):
    """Bad CLI configuration or unusable input paths (exit code 2)."""


class ArtifactError(ChargecastError):
    """Saved artifacts are missing, malformed, or from a different layout."""
