"""Exception hierarchy shared by the encoders, learners, environments and CLI."""


class LosseError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(LosseError, ValueError):
    """Invalid or incomplete configuration."""


class ShapeError(LosseError, ValueError):
    """Vector or matrix dimensions do not match."""


class NonFiniteError(LosseError, ValueError):
    """NaN or Inf where a finite value is required."""


class SolverError(LosseError, ArithmeticError):
    """A linear system could not be factorized (singular without ridge term)."""


class IdxParseError(LosseError, ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class MetricsParseError(LosseError, ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"{message} (line {line})")
        self.line = line


class DatasetMissingError(LosseError, FileNotFoundError):
    """Dataset file absent and the synthetic fallback is disabled."""


__all__ = [
    "LosseError",
    "ConfigError",
    "ShapeError",
    "NonFiniteError",
    "SolverError",
    "IdxParseError",
    "MetricsParseError",
    "DatasetMissingError",
]
