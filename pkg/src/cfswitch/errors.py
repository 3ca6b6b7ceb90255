"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ``DataError`` and ``ConfigError`` exit 2,
``NumericError`` exits 3.
"""


class CfSwitchError(Exception):
    """Base class for all toolkit errors."""


class DataError(CfSwitchError):
    """Malformed, missing or empty input data."""


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(DataError):
    def __init__(self, column: str, message: str | None = None):
        self.column = column
        super().__init__(message or f"missing required column {column!r}")


class EmptyCorpusError(DataError):
    pass


class ConfigError(CfSwitchError):
    """Invalid or missing configuration (files, thresholds, policies)."""


class NumericError(CfSwitchError):
    """A numerical routine failed (singular matrix, non-SPD input, ...)."""


class CollisionError(NumericError):
    """Follower gap became non-positive."""
