"""Exception hierarchy. The CLI maps each family to an exit code."""


class DemodiffError(Exception):
    """Base class for all package errors."""


class ConfigError(DemodiffError, ValueError):
    """Invalid user configuration or arguments (exit code 1)."""


class DataError(DemodiffError, ValueError):
    """Input data violates a format or invariant (exit code 2).

    ``location`` is a ``(file, line, column)`` triple when known.
    """

    def __init__(self, message, *, file=None, line=None, column=None):
        self.file = file
        self.line = line
        self.column = column
        where = []
        if file is not None:
            where.append(str(file))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class NumericError(DemodiffError, ArithmeticError):
    """A numerical procedure failed or a statistic is undefined (exit code 3)."""


class DegenerateStatisticError(NumericError):
    """The test statistic is 0/0 for the given inputs."""


class UndefinedMetricError(NumericError):
    """A rate has an empty denominator where a value is required."""
