"""Static verification sweeps: isoperimetric-type gaps and integral identities."""

from typing import NamedTuple

import numpy as np

from .config import CosineShape, OffcenterShape, SphereShape
from .geometry import compute_geometry, gradient_identity_residual, minkowski_residual
from .grid import build_grid
from .hyperbolic import ball_quermass_all
from .quermass import quermass_all
from .shapes import make_shape

AF_TOL = 1e-6
ORDER_MIN = 1.9
GRADIENT_TOL = 1e-12


def af_family():
    """The fixed sweep family, as (label, shape spec) pairs in a stable order."""
    out = []
    for r in (0.5, 1.0, 2.0):
        out.append((f"sphere r={r:g}", SphereShape(kind="sphere", params={"r": r})))
    for mode in (1, 2):
        for eps in (0.05, 0.1, 0.2):
            out.append((
                f"cosine eps={eps:g} mode={mode}",
                CosineShape(kind="cosine", params={"r0": 1.0, "eps": eps, "mode": mode}),
            ))
    for d in (0.1, 0.3):
        out.append((f"offcenter r=1 d={d:g}", OffcenterShape(kind="offcenter", params={"r": 1.0, "d": d})))
    return out


class AfRecord(NamedTuple):
    n: int
    label: str
    kind: str
    A_nm2: float
    af_gap: float
    scaled_gap: float
    r_equiv: float

    @property
    def ok(self):
        if self.kind == "sphere":
            return abs(self.af_gap) <= AF_TOL * self.A_nm2
        return self.scaled_gap >= -AF_TOL


def af_sweep(ns=(2, 3, 4), m=1024):
    """Gap A_{n-2} - xi_{n-2}(xi_{-1}^{-1}(vol)) over the family for each n.

    ``scaled_gap`` divides by max(1, A_{n-2}).
    """
    records = []
    for n in ns:
        grid = build_grid(n, m)
        for label, spec in af_family():
            geom = compute_geometry(make_shape(spec, grid))
            rep = quermass_all(geom)
            a = rep.A_k(n - 2)
            records.append(AfRecord(n, label, spec.kind, a, rep.af_gap, rep.af_gap / max(1.0, a), rep.r_equiv))
    return records


class IdentityStudy(NamedTuple):
    n: int
    ms: tuple
    residuals: np.ndarray  # (len(ms), n): Minkowski residual for k = 0..n-1
    orders: np.ndarray  # (len(ms) - 1, n)
    gradient: float

    @property
    def gated_orders(self):
        """Observed orders for k = 0 and k = n-1, the gated ones."""
        return self.orders[:, [0, self.n - 1]]

    @property
    def ok(self):
        return bool(np.all(self.gated_orders >= ORDER_MIN) and self.gradient <= GRADIENT_TOL)


def identity_study(n, spec, ms=(128, 256, 512)):
    """Minkowski and gradient-identity residuals of one shape under refinement.

    Orders are log2 of successive residual ratios; ``ms`` should double.
    """
    res = np.empty((len(ms), n))
    grad = 0.0
    for i, m in enumerate(ms):
        geom = compute_geometry(make_shape(spec, build_grid(n, m)))
        res[i] = [minkowski_residual(geom, k) for k in range(n)]
        grad = max(grad, gradient_identity_residual(geom))
    ratios = np.abs(res[:-1]) / np.abs(res[1:])
    steps = np.log2(np.asarray(ms[1:], dtype=float) / np.asarray(ms[:-1], dtype=float))
    orders = np.log2(ratios) / steps[:, None]
    return IdentityStudy(n, tuple(ms), res, orders, grad)


def observed_order(errors, hs):
    """Least-squares slope of log(error) against log(h)."""
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


def ball_table(n, radii):
    """Rows [r, xi_{-1}(r), ..., xi_{n-1}(r)]."""
    return np.array([[r, *ball_quermass_all(n, float(r))] for r in radii])
