"""Curvature flow of star-shaped radial graphs in hyperbolic space."""

from .errors import (
    CFLCollapseError,
    ConfigError,
    ConvexityLoss,
    DegeneracyError,
    DomainError,
    GaussFlowError,
    InsufficientDataError,
    OutputError,
    ShapeError,
    ShapeMismatchError,
    XiRangeError,
)
from .flow import FlowState, FlowTrace, StepControl, rate_fit, run
from .geometry import compute_geometry, minkowski_residual
from .grid import RadialField, build_grid
from .quermass import quermass_all, volume

__version__ = "0.1.0"

__all__ = [
    "CFLCollapseError",
    "ConfigError",
    "ConvexityLoss",
    "DegeneracyError",
    "DomainError",
    "FlowState",
    "FlowTrace",
    "GaussFlowError",
    "InsufficientDataError",
    "OutputError",
    "RadialField",
    "ShapeError",
    "ShapeMismatchError",
    "StepControl",
    "XiRangeError",
    "build_grid",
    "compute_geometry",
    "minkowski_residual",
    "quermass_all",
    "rate_fit",
    "run",
    "volume",
]
