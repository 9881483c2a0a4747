"""Closed-form primitives of hyperbolic space written as a warped product.

H^{n+1} = S^n x [0, inf) with metric d rho^2 + sinh^2(rho) g_{S^n}.  The warp
factor is phi = sinh, its derivative phi' = cosh and its primitive
Phi = cosh - 1.  Geodesic balls centred at the origin serve as the reference
family for every quermassintegral comparison, so their values xi_k(r) and
the inverse of xi_k are provided here.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import integrate

from . import _kernels
from .errors import DomainError, XiRangeError

XI_BRACKET = (1e-6, 20.0)

quermass_recursion = _kernels.quermass_recursion


@dataclass(frozen=True)
class WarpEval:
    rho: float
    phi: float
    phi_prime: float
    Phi: float


def omega(n):
    """Area of the unit n-sphere."""
    return 2.0 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2)


def warp(rho):
    rho = float(rho)
    if not math.isfinite(rho) or rho < 0.0:
        raise DomainError(f"warp needs a finite rho >= 0, got {rho!r}")
    half = math.sinh(0.5 * rho)
    return WarpEval(rho=rho, phi=math.sinh(rho), phi_prime=math.cosh(rho), Phi=2.0 * half * half)


def gamma_of_rho(rho):
    """Primitive of 1/sinh, normalised so that gamma(rho) = log tanh(rho/2).

    Works elementwise on arrays.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(~np.isfinite(rho)) or np.any(rho <= 0.0):
        raise DomainError("gamma_of_rho needs finite rho > 0")
    out = np.log(np.tanh(0.5 * rho))
    return out if out.ndim else float(out)


def rho_of_gamma(gamma):
    gamma = np.asarray(gamma, dtype=float)
    if np.any(~np.isfinite(gamma)) or np.any(gamma >= 0.0):
        raise DomainError("rho_of_gamma needs finite gamma < 0")
    out = 2.0 * np.arctanh(np.exp(gamma))
    return out if out.ndim else float(out)


def _check_k(k, n):
    if not isinstance(k, (int, np.integer)) or k < 0 or k > n:
        raise DomainError(f"sigma index k={k!r} outside 0..{n}")


def sigma_all(kappa):
    """sigma_0..sigma_n of a curvature vector via the product of (1 + kappa_i t)."""
    kappa = np.asarray(kappa, dtype=float)
    coeffs = np.zeros(kappa.size + 1)
    coeffs[0] = 1.0
    for i, kap in enumerate(kappa):
        coeffs[1:i + 2] += kap * coeffs[0:i + 1].copy()
    return coeffs


def sigma_k(kappa, k):
    kappa = np.asarray(kappa, dtype=float)
    _check_k(k, kappa.size)
    return float(sigma_all(kappa)[k])


def sigma_k_axisym(kappa_m, kappa_o, n, k):
    """sigma_k of (kappa_m, kappa_o, ..., kappa_o) with kappa_o repeated n-1 times.

    Accepts scalars or equally shaped arrays.
    """
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    _check_k(k, n)
    if k == 0:
        return np.ones_like(np.asarray(kappa_m, dtype=float)) if np.ndim(kappa_m) else 1.0
    km = np.asarray(kappa_m, dtype=float)
    ko = np.asarray(kappa_o, dtype=float)
    out = math.comb(n - 1, k) * ko ** k + math.comb(n - 1, k - 1) * km * ko ** (k - 1)
    return out if out.ndim else float(out)


def sinh_power_integral(r, n):
    """Integral of sinh^n over [0, r] by adaptive quadrature."""
    if r == 0.0:
        return 0.0
    val, _ = integrate.quad(lambda s: math.sinh(s) ** n, 0.0, r, epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def _check_ball_args(n, k):
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise DomainError(f"n must be an integer >= 2, got {n!r}")
    if not isinstance(k, (int, np.integer)) or k < -1 or k > n - 1:
        raise DomainError(f"quermassintegral index k={k!r} outside -1..{n - 1}")


def ball_quermass_all(n, r):
    """xi_{-1}(r), ..., xi_{n-1}(r) for the geodesic ball of radius r."""
    if not (r > 0.0 and math.isfinite(r)):
        raise DomainError(f"ball radius must be positive and finite, got {r!r}")
    om = omega(n)
    vol = om * sinh_power_integral(r, n)
    curv = _kernels.ball_curvature_integrals(n, float(r), om)
    return quermass_recursion(n, vol, curv)


def ball_quermass(n, k, r):
    _check_ball_args(n, k)
    return float(ball_quermass_all(n, r)[k + 1])


def xi_inverse(n, k, target, bracket=XI_BRACKET):
    """Radius r in ``bracket`` with xi_k(r) = target, by bisection."""
    _check_ball_args(n, k)
    lo, hi = bracket
    f_lo = ball_quermass(n, k, lo)
    f_hi = ball_quermass(n, k, hi)
    if not (f_lo <= target <= f_hi):
        raise XiRangeError(
            f"xi_{k} target {target!r} outside [{f_lo!r}, {f_hi!r}] for r in [{lo}, {hi}] (n={n})",
            lo_value=f_lo,
            hi_value=f_hi,
        )
    tol = 1e-10 * max(1.0, abs(target))
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        val = ball_quermass(n, k, mid)
        if abs(val - target) <= tol and hi - lo < 1e-13 * mid:
            return mid
        if val < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 2e-16 * mid:
            break
    return 0.5 * (lo + hi)
