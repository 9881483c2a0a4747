"""Extrinsic geometry of a radial graph over S^n in hyperbolic space.

For an axisymmetric radial function the Weingarten matrix has two distinct
eigenvalues: the meridian curvature kappa_m and the orthogonal curvature
kappa_o (multiplicity n - 1).  Everything else (sigma_k, K, H, support
function, area element) follows node by node.
"""

from dataclasses import dataclass, field
import warnings

import numpy as np

from . import _kernels
from .errors import DomainError
from .grid import AxiGrid, RadialField, integrate
from .hyperbolic import sigma_k_axisym


class DegenerateDenominatorWarning(UserWarning):
    """A relative residual fell back to an absolute one."""


@dataclass(frozen=True, eq=False)
class GeometryFields:
    field: RadialField
    d1: np.ndarray = field(repr=False)
    d2: np.ndarray = field(repr=False)
    h_orth: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    phi_prime: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    kappa_m: np.ndarray = field(repr=False)
    kappa_o: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)
    dmu: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    convex: bool = True
    first_bad_node: int | None = None

    @property
    def grid(self) -> AxiGrid:
        return self.field.grid

    @property
    def n(self) -> int:
        return self.field.grid.n

    @property
    def rho(self):
        return self.field.rho

    @property
    def H(self):
        return self.sigma[1]

    @property
    def K(self):
        return self.sigma[self.n]

    @property
    def kappa_min(self) -> float:
        return float(min(self.kappa_m.min(), self.kappa_o.min()))

    @property
    def gauss_root(self):
        """K^{1/n}, NaN at nodes that are not uniformly convex."""
        n = self.n
        out = np.full(self.kappa_m.shape, np.nan)
        ok = (self.kappa_m > 0) & (self.kappa_o > 0)
        out[ok] = np.exp((np.log(self.kappa_m[ok]) + (n - 1) * np.log(self.kappa_o[ok])) / n)
        return out

    def convexity_info(self):
        """(node, kappa_m, kappa_o) of the first non-convex node, or None."""
        if self.convex:
            return None
        j = self.first_bad_node
        return j, float(self.kappa_m[j]), float(self.kappa_o[j])

    def surface_integral(self, values) -> float:
        """Integral of a per-node quantity over the hypersurface."""
        return integrate(self.grid, np.asarray(values) * self.dmu)


def compute_geometry(fld: RadialField) -> GeometryFields:
    grid = fld.grid
    n = grid.n
    rho = np.ascontiguousarray(fld.rho)
    d1, d2, q, phi, php, v, km, ko = _kernels.geometry_arrays(rho, grid.cot, grid.dpsi, n)
    sigma = np.empty((n + 1, grid.m))
    for k in range(n + 1):
        sigma[k] = sigma_k_axisym(km, ko, n, k)
    bad = np.flatnonzero(~((km > 0) & (ko > 0)))
    convex = bad.size == 0
    w = v / phi
    u = phi * phi / v
    geom = GeometryFields(
        field=fld,
        d1=d1,
        d2=d2,
        h_orth=q,
        phi=phi,
        phi_prime=php,
        v=v,
        w=w,
        u=u,
        kappa_m=km,
        kappa_o=ko,
        sigma=sigma,
        dmu=phi ** (n - 1) * v,
        theta=np.empty(0),
        convex=convex,
        first_bad_node=None if convex else int(bad[0]),
    )
    object.__setattr__(geom, "theta", u * geom.gauss_root)
    return geom


def minkowski_terms(geom, k):
    """Both sides of the k-th Minkowski identity, integrated over the graph."""
    n = geom.n
    if not isinstance(k, (int, np.integer)) or k < 0 or k > n - 1:
        raise DomainError(f"Minkowski index k={k!r} outside 0..{n - 1}")
    lhs = (n - k) * geom.surface_integral(geom.phi_prime * geom.sigma[k])
    rhs = (k + 1) * geom.surface_integral(geom.u * geom.sigma[k + 1])
    return lhs, rhs


def minkowski_residual(geom, k):
    """Relative defect of the k-th Minkowski identity.

    When the left-hand side is not safely positive the absolute defect is
    returned instead and a DegenerateDenominatorWarning is issued.
    """
    lhs, rhs = minkowski_terms(geom, k)
    if lhs > 1e-300:
        return (lhs - rhs) / lhs
    warnings.warn(
        f"Minkowski residual k={k}: left side {lhs!r} not positive, returning absolute defect",
        DegenerateDenominatorWarning,
        stacklevel=2,
    )
    return lhs - rhs


def gradient_identity_residual(geom):
    """max over nodes of |rho'^2/(phi^2+rho'^2) - (1 - (u/phi)^2)|."""
    p2 = geom.d1 ** 2
    left = p2 / (geom.phi ** 2 + p2)
    # u / phi written as phi / v, so a flat node gives exactly zero
    right = 1.0 - (geom.phi / geom.v) ** 2
    return float(np.max(np.abs(left - right)))
