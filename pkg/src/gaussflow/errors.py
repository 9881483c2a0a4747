"""Exception hierarchy shared by every gaussflow module."""


class GaussFlowError(Exception):
    """Base class for all package errors."""


class DomainError(GaussFlowError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ShapeMismatchError(GaussFlowError, ValueError):
    """A per-node array does not match the grid it is used with."""


class XiRangeError(GaussFlowError, ValueError):
    """Target value lies outside the bracketed range of a ball quermassintegral."""

    def __init__(self, message, lo_value=None, hi_value=None):
        super().__init__(message)
        self.lo_value = lo_value
        self.hi_value = hi_value


class ConfigError(GaussFlowError, ValueError):
    """Invalid run configuration or grid parameters."""


class ShapeError(GaussFlowError, ValueError):
    """Initial shape violates positivity or uniform convexity.

    ``hypothesis`` is ``"positivity"`` or ``"convexity"`` and ``node`` is the
    first offending grid index.
    """

    def __init__(self, message, hypothesis=None, node=None):
        super().__init__(message)
        self.hypothesis = hypothesis
        self.node = node


class ConvexityLoss(GaussFlowError):
    """Gauss curvature is non-positive somewhere on the hypersurface."""

    def __init__(self, node, kappa_m, kappa_o):
        super().__init__(
            f"convexity lost at node {node}: kappa_m={kappa_m!r}, kappa_o={kappa_o!r}"
        )
        self.node = node
        self.kappa_m = kappa_m
        self.kappa_o = kappa_o


class DegeneracyError(GaussFlowError):
    """A time step kept failing after all allowed dt halvings."""


class CFLCollapseError(GaussFlowError):
    """The stable time step fell below the configured minimum."""


class InsufficientDataError(GaussFlowError, ValueError):
    """Too few usable trace rows for a rate fit."""


class OutputError(GaussFlowError, OSError):
    """Reading or writing an output file failed; the message names the path."""
