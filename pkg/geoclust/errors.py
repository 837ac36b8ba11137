"""
    geoclust.errors
    ~~~~~

    Exception taxonomy. Every error carries the process exit code the command
    line front end reports for it.
"""


class GeoclustError(Exception):
    """Base class for all errors raised by geoclust."""

    #: Exit code reported by the command line front end.
    exit_code = 1


class ConfigError(GeoclustError, ValueError):
    """Invalid or inconsistent configuration."""

    exit_code = 2


class DataError(GeoclustError, ValueError):
    """Missing, malformed or out-of-range input data."""

    exit_code = 3


class NumericError(GeoclustError, ArithmeticError):
    """A computation could not produce a finite, meaningful result."""

    exit_code = 4


class NoElbowError(NumericError):
    """The WCSS curve has no point below its first-to-last chord."""


class StageError(GeoclustError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage, error):
        self.stage = stage
        self.error = error
        self.exit_code = getattr(error, "exit_code", GeoclustError.exit_code)
        super().__init__("[{}] {}".format(stage, error))
