"""Optimal PMU placement with empirical observability Gramians."""

from ._core import (
    Case,
    GuardError,
    Model,
    NumericalError,
    ValidationError,
    __version__,
    logdet,
    overlap_ratio,
    place,
    place_incremental,
    power_flow,
)

__all__ = [
    "Case",
    "GuardError",
    "Model",
    "NumericalError",
    "ValidationError",
    "__version__",
    "logdet",
    "overlap_ratio",
    "place",
    "place_incremental",
    "power_flow",
]
