"""Exception hierarchy shared by every orars module."""


class OrarsError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolationError(OrarsError, ValueError):
    """Arguments break a shape or length contract (e.g. mismatched lengths)."""


class InvalidDataError(OrarsError, ValueError):
    """Input data contains non-finite values or values outside their domain."""


class InvalidConfigError(OrarsError, ValueError):
    """A configuration value is missing, unknown, or out of range."""


class DegenerateRangeError(InvalidDataError):
    """All labels are identical, so the pair weighting range is zero."""


class OutOfDomainError(OrarsError, ValueError):
    """A closed form was requested outside the region where it holds."""


class TrainingDivergedError(OrarsError, RuntimeError):
    """Loss or gradients became non-finite during training."""

    def __init__(self, message, config=None):
        super().__init__(message)
        self.config = config


class GridSearchFailedError(OrarsError, RuntimeError):
    """Every grid-search candidate diverged."""


class DatasetParseError(OrarsError, ValueError):
    """A delimited dataset file could not be parsed."""
