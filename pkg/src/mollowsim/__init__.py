"""Deterministic spin-dynamics simulator and spectral toolkit for
Mollow-triplet/quintuplet signatures of RF-dressed helium vapor."""

from .errors import (
    AlignmentUnsupportedError,
    ConfigError,
    MollowsimError,
    NumericalInvariantError,
    PipelineError,
)

__version__ = "0.1.0"

__all__ = [
    "MollowsimError",
    "ConfigError",
    "NumericalInvariantError",
    "AlignmentUnsupportedError",
    "PipelineError",
    "__version__",
]
