"""Initial radial fields for the supported shape kinds."""

import math

import numpy as np
from pydantic import TypeAdapter, ValidationError
from scipy.interpolate import CubicSpline

from .config import ShapeSpec
from .errors import ConfigError, ShapeError
from .geometry import compute_geometry
from .grid import RadialField

_SHAPE = TypeAdapter(ShapeSpec)


def offcenter_radius(psi, r, d):
    """Radial function of the geodesic sphere of radius r centred at distance d.

    Writing cosh r = a cosh(rho) - b sinh(rho) with a = cosh d and
    b = sinh d cos(psi) gives rho = artanh(b/a) + arcosh(cosh r / sqrt(a^2 - b^2)).
    """
    psi = np.asarray(psi, dtype=float)
    a = math.cosh(d)
    b = math.sinh(d) * np.cos(psi)
    return np.arctanh(b / a) + np.arccosh(math.cosh(r) / np.sqrt(a * a - b * b))


def shape_values(spec, psi):
    """Raw rho values of a shape spec at the given angles (no checks)."""
    p = spec.params
    if spec.kind == "sphere":
        return np.full(np.shape(psi), p.r)
    if spec.kind == "cosine":
        return p.r0 + p.eps * np.cos(p.mode * np.asarray(psi))
    if spec.kind == "offcenter":
        return offcenter_radius(psi, p.r, p.d)
    # zero slope at both poles keeps the interpolant even under reflection
    spline = CubicSpline(p.psi, p.rho, bc_type="clamped")
    return spline(psi)


def make_shape(spec, grid):
    """Build and check the initial RadialField for a shape spec (model or dict).

    Raises ShapeError naming the violated hypothesis and the first
    offending node when the field is not positive or not uniformly convex.
    """
    if isinstance(spec, dict):
        try:
            spec = _SHAPE.validate_python(spec)
        except ValidationError as exc:
            raise ConfigError(f"invalid shape: {exc.errors()[0]['msg']}") from exc
    rho = np.asarray(shape_values(spec, grid.psi), dtype=float)
    bad = np.flatnonzero(~(np.isfinite(rho) & (rho > 0.0)))
    if bad.size:
        j = int(bad[0])
        raise ShapeError(
            f"{spec.kind} shape is not positive: node {j} (psi={grid.psi[j]:.6g}) has rho={rho[j]!r}",
            hypothesis="positivity",
            node=j,
        )
    fld = RadialField(grid, rho)
    geom = compute_geometry(fld)
    if not geom.convex:
        j, km, ko = geom.convexity_info()
        raise ShapeError(
            f"{spec.kind} shape is not uniformly convex: node {j} (psi={grid.psi[j]:.6g}) "
            f"has kappa_m={km!r}, kappa_o={ko!r}",
            hypothesis="convexity",
            node=j,
        )
    return fld
