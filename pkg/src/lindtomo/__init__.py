"""Lindblad tomography toolkit.

Reconstructs time-independent Lindblad generators of small open quantum
systems from short-time measurement data, via either a deterministic
tomographically complete protocol or a randomized classical-shadow protocol,
with chi-square and robust linear-programming fits for the slopes at the
intercept.
"""

from .pauli import PauliString, PhasedPauli, multiply, to_matrix, hilbert_schmidt
from .model import LindbladModel, ModelTemplate, basis_generators, random_model
from .errors import (
    CapacityError,
    ConfigError,
    ContractError,
    DimensionError,
    FitError,
    InsufficientDataError,
    LearnabilityError,
)

__all__ = [
    "PauliString",
    "PhasedPauli",
    "multiply",
    "to_matrix",
    "hilbert_schmidt",
    "LindbladModel",
    "ModelTemplate",
    "basis_generators",
    "random_model",
    "CapacityError",
    "ConfigError",
    "ContractError",
    "DimensionError",
    "FitError",
    "InsufficientDataError",
    "LearnabilityError",
]

__version__ = "0.1.0"
