"""Axisymmetric discretisation of S^n by the polar angle psi in [0, pi].

Nodes are cell-centred, psi_j = (j + 1/2) dpsi with dpsi = pi / m, so no node
sits on a pole.  Derivatives use centred stencils whose ghost values come
from even reflection across both poles; that reflection is what makes a
rotationally symmetric function smooth on S^n.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import _kernels
from .errors import ConfigError, DomainError, ShapeMismatchError
from .hyperbolic import omega

MIN_NODES = 16
_CELL_GL = np.polynomial.legendre.leggauss(16)


def node_angles(m):
    """Cell-centred polar angles for m cells on [0, pi]."""
    return (np.arange(m) + 0.5) * (math.pi / m)


def cell_weights(n, m):
    """S^n measure of each polar cell: omega_{n-1} times the integral of sin^{n-1}.

    Each cell integral uses 16-point Gauss-Legendre, exact to rounding, so the
    weights sum to omega_n.
    """
    h = math.pi / m
    x, wgl = _CELL_GL
    left = np.arange(m)[:, None] * h
    pts = left + 0.5 * h * (x[None, :] + 1.0)
    cell = 0.5 * h * (np.sin(pts) ** (n - 1)) @ wgl
    return omega(n - 1) * cell


@dataclass(frozen=True, eq=False)
class AxiGrid:
    n: int
    m: int
    dpsi: float
    psi: np.ndarray = field(repr=False)
    quad_w: np.ndarray = field(repr=False)
    cot: np.ndarray = field(repr=False)

    def check(self, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (self.m,):
            raise ShapeMismatchError(f"expected {self.m} nodal values, got shape {values.shape}")
        return values


def build_grid(n, m):
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ConfigError(f"n must be an integer >= 2, got {n!r}")
    if not isinstance(m, (int, np.integer)) or m < MIN_NODES:
        raise ConfigError(f"m must be an integer >= {MIN_NODES}, got {m!r}")
    psi = node_angles(m)
    quad_w = cell_weights(n, m)
    cot = 1.0 / np.tan(psi)
    for arr in (psi, quad_w, cot):
        arr.setflags(write=False)
    return AxiGrid(n=int(n), m=int(m), dpsi=math.pi / m, psi=psi, quad_w=quad_w, cot=cot)


@dataclass(frozen=True, eq=False)
class RadialField:
    """Radial function rho on the grid nodes at one simulation time."""

    grid: AxiGrid
    rho: np.ndarray = field(repr=False)
    time: float = 0.0

    def __post_init__(self):
        rho = np.array(self.grid.check(self.rho), dtype=float)
        if not np.all(np.isfinite(rho)) or np.any(rho <= 0.0):
            bad = int(np.flatnonzero(~(np.isfinite(rho) & (rho > 0.0)))[0])
            raise DomainError(f"radial field must be positive and finite; node {bad} has rho={rho[bad]!r}")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)


def d_psi(grid, values):
    values = grid.check(values)
    return _kernels.derivatives(np.ascontiguousarray(values), grid.dpsi)[0]


def d2_psi(grid, values):
    values = grid.check(values)
    return _kernels.derivatives(np.ascontiguousarray(values), grid.dpsi)[1]


def sphere_hessian(grid, values):
    """Eigenvalues of the S^n Hessian of an axisymmetric function.

    Returns (meridian, orthogonal) = (f'', cot(psi) f').  The orthogonal part
    stays finite at the near-pole nodes because the reflected stencil makes
    f' vanish linearly there.
    """
    values = grid.check(values)
    d1, d2 = _kernels.derivatives(np.ascontiguousarray(values), grid.dpsi)
    return d2, grid.cot * d1


def integrate(grid, values):
    values = grid.check(values)
    return math.fsum(values * grid.quad_w)
