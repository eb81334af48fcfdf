"""Exception types shared across the package."""


class SkewflError(Exception):
    """Base class for all package-specific errors."""


class DegenerateDirectionError(SkewflError, ValueError):
    """A direction vector required to be nonzero has (numerically) zero norm."""


class InsufficientClientsError(SkewflError, ValueError):
    """An aggregation rule received fewer clients than its breakdown point allows."""


class InvalidParameterError(SkewflError, ValueError):
    """A rule or attack parameter is outside its valid range."""


class TrainingDivergenceError(SkewflError, RuntimeError):
    """Local training produced non-finite parameters or loss."""

    def __init__(self, message, round_index=None, client_id=None):
        super().__init__(message)
        self.round_index = round_index
        self.client_id = client_id


class ConfigError(SkewflError, ValueError):
    """Configuration document could not be parsed or validated.

    ``line`` is the 1-based line number of the offending entry when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
