"""Exception types shared across the package."""


class LindtomoError(Exception):
    """Base class for package errors."""


class DimensionError(LindtomoError, ValueError):
    """Operands act on incompatible numbers of qubits or matrix sizes."""


class CapacityError(LindtomoError, ValueError):
    """Requested dense object exceeds the configured qubit cap."""


class ContractError(LindtomoError, ValueError):
    """An input violates a structural precondition (e.g. non-Hermitian D)."""


class LearnabilityError(LindtomoError, ValueError):
    """The transfer matrix is rank deficient over the requested parameters."""

    def __init__(self, message, null_directions=None):
        super().__init__(message)
        self.null_directions = list(null_directions or [])


class InsufficientDataError(LindtomoError, RuntimeError):
    """An estimator received no usable samples for one or more elements."""

    def __init__(self, message, elements=None):
        super().__init__(message)
        self.elements = list(elements or [])


class FitError(LindtomoError, RuntimeError):
    """A regression could not be performed on the given data."""


class ConfigError(LindtomoError, ValueError):
    """A run configuration file is invalid."""
