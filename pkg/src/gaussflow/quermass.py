"""Quermassintegrals of star-shaped domains and the Alexandrov-Fenchel gap.

A_{-1} is the enclosed volume, A_0 the boundary area, and higher A_k come
from curvature integrals through the two-step recursion.  The gap compares
A_{n-2} with the value on the geodesic ball of equal volume.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import XiRangeError
from .geometry import GeometryFields, minkowski_residual
from .grid import RadialField, integrate
from .hyperbolic import ball_quermass, quermass_recursion, xi_inverse

_GL_X, _GL_W = np.polynomial.legendre.leggauss(32)


@dataclass(frozen=True)
class QuermassReport:
    n: int
    A: np.ndarray = field(repr=False)
    mink_res: np.ndarray = field(repr=False)
    af_gap: float
    r_equiv: float

    def A_k(self, k):
        return float(self.A[k + 1])

    def to_dict(self):
        return {
            "n": self.n,
            "A": {str(k): float(self.A[k + 1]) for k in range(-1, self.n)},
            "mink_res": [float(x) for x in self.mink_res],
            "af_gap": float(self.af_gap),
            "r_equiv": float(self.r_equiv),
        }


def volume(fld: RadialField) -> float:
    """Hyperbolic volume enclosed by the radial graph.

    The radial integral of sinh^n from 0 to rho(psi) uses 32-point
    Gauss-Legendre per node.
    """
    n = fld.grid.n
    half = 0.5 * fld.rho[:, None]
    inner = half[:, 0] * (np.sinh(half * (_GL_X[None, :] + 1.0)) ** n @ _GL_W)
    return integrate(fld.grid, inner)


def curvature_integrals(geom: GeometryFields):
    """Integrals of sigma_0..sigma_n over the hypersurface."""
    return np.array([geom.surface_integral(geom.sigma[j]) for j in range(geom.n + 1)])


def quermass_all(geom: GeometryFields, fld: RadialField | None = None) -> QuermassReport:
    fld = geom.field if fld is None else fld
    n = geom.n
    vol = volume(fld)
    A = quermass_recursion(n, vol, curvature_integrals(geom))
    try:
        r_eq = xi_inverse(n, -1, vol)
    except XiRangeError as exc:
        raise XiRangeError(
            f"volume-equivalent radius unavailable for volume {vol!r}: {exc}",
            lo_value=exc.lo_value,
            hi_value=exc.hi_value,
        ) from exc
    gap = A[n - 1] - ball_quermass(n, n - 2, r_eq)
    mink = np.array([minkowski_residual(geom, k) for k in range(n)])
    return QuermassReport(n=n, A=A, mink_res=mink, af_gap=float(gap), r_equiv=float(r_eq))


def normal_speed(geom: GeometryFields):
    """Outward normal speed phi' - u K^{1/n} of the flow."""
    return geom.phi_prime - geom.u * geom.gauss_root


def variation_check(geom_t, geom_next, dt, speed=None):
    """Compare finite-difference rates of A_{-1} and A_{n-2} with their variational formulas.

    ``speed`` is the normal speed at the first state (computed from
    ``geom_t`` if omitted).  Each residual is relative to the magnitude of
    the predicted rate, or absolute when that rate is negligible.
    """
    n = geom_t.n
    f = normal_speed(geom_t) if speed is None else np.asarray(speed)
    vol_rate = (volume(geom_next.field) - volume(geom_t.field)) / dt
    vol_pred = geom_t.surface_integral(f)
    a_t = quermass_recursion(n, volume(geom_t.field), curvature_integrals(geom_t))[n - 1]
    a_next = quermass_recursion(n, volume(geom_next.field), curvature_integrals(geom_next))[n - 1]
    a_rate = (a_next - a_t) / dt
    a_pred = (n - 1) * geom_t.surface_integral(f * geom_t.sigma[n - 1])
    floor = 1e-12 * geom_t.surface_integral(np.ones(geom_t.grid.m))

    def _res(rate, pred):
        err = abs(rate - pred)
        return err / abs(pred) if abs(pred) > floor else err

    return _res(vol_rate, vol_pred), _res(a_rate, a_pred)

