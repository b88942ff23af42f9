"""Exception types shared across the package."""


class UdaError(Exception):
    """Base class for all package errors."""


class ContractError(UdaError, ValueError):
    """A function was called with arguments violating its preconditions."""


class ConfigError(UdaError, ValueError):
    """Invalid configuration (dimensions, ranges, enum values)."""


class NumericError(UdaError, ArithmeticError):
    """Non-finite values were produced during a forward or backward pass."""


class FeatureFileError(UdaError, ValueError):
    """A feature file failed to parse; message carries the line number."""
