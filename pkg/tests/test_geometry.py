import math
import warnings

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from gaussflow import _kernels
from gaussflow.errors import DomainError
from gaussflow.geometry import (
    DegenerateDenominatorWarning,
    compute_geometry,
    gradient_identity_residual,
    minkowski_residual,
    minkowski_terms,
)
from gaussflow.grid import RadialField, build_grid
from oracles import PSI, WeingartenOracle

def _exact_derivatives(rho_expr):
    f = sp.lambdify(PSI, rho_expr, "math")
    d1 = sp.lambdify(PSI, rho_expr.diff(PSI), "math")
    d2 = sp.lambdify(PSI, rho_expr.diff(PSI, 2), "math")
    return f, d1, d2


SHAPES = [
    1 + sp.Rational(1, 20) * sp.cos(PSI),
    1 + sp.Rational(1, 5) * sp.cos(PSI),
    sp.Rational(3, 2) + sp.Rational(1, 10) * sp.cos(2 * PSI) - sp.Rational(1, 50) * sp.cos(PSI),
    sp.Rational(1, 2) + sp.Rational(1, 20) * sp.cos(PSI) ** 2,
]


def field(n, m, fn):
    g = build_grid(n, m)
    return RadialField(g, fn(g.psi))


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("expr", SHAPES, ids=["c05", "c20", "mode2", "small"])
def test_closed_form_curvatures_match_hyperboloid(n, expr):
    oracle = WeingartenOracle(n, expr)
    f, d1, d2 = _exact_derivatives(expr)
    for psi in np.linspace(0.05, math.pi - 0.05, 23):
        rho, p, s = f(psi), d1(psi), d2(psi)
        q = p / math.tan(psi)
        _, _, _, km, ko = _kernels.node_curvatures(rho, p, s, q)
        km_ref, ko_ref = oracle(psi)
        assert km == pytest.approx(km_ref, rel=1e-12, abs=1e-13)
        assert ko == pytest.approx(ko_ref, rel=1e-12, abs=1e-13)


def test_discrete_curvatures_match_oracle():
    expr = 1 + sp.Rational(1, 20) * sp.cos(PSI)
    oracle = WeingartenOracle(2, expr)
    geom = compute_geometry(field(2, 512, lambda x: 1 + 0.05 * np.cos(x)))
    ref = np.array([oracle(p) for p in geom.grid.psi])
    assert np.max(np.abs(geom.kappa_m - ref[:, 0])) < 1e-6
    assert np.max(np.abs(geom.kappa_o - ref[:, 1])) < 1e-6


def test_oracle_recovers_sphere():
    km, ko = WeingartenOracle(3, sp.Rational(6, 5))(1.1)
    assert km == pytest.approx(1 / math.tanh(1.2), rel=1e-13)
    assert ko == pytest.approx(1 / math.tanh(1.2), rel=1e-13)


@pytest.mark.parametrize("n", [2, 3, 4])
@pytest.mark.parametrize("r", [0.3, 1.0, 2.5])
def test_constant_field_is_umbilic(n, r):
    geom = compute_geometry(field(n, 64, lambda x: np.full_like(x, r)))
    c = 1 / math.tanh(r)
    assert np.allclose(geom.kappa_m, c, rtol=1e-13, atol=0)
    assert np.allclose(geom.kappa_o, c, rtol=1e-13, atol=0)
    assert np.max(np.abs(geom.kappa_m - geom.kappa_o)) <= 1e-10
    assert np.all(geom.w == 1.0)


def test_unit_sphere_values():
    geom = compute_geometry(field(2, 32, np.ones_like))
    assert np.allclose(geom.K, 1.72406, rtol=1e-5, atol=0)
    assert np.allclose(geom.K, 1 / math.tanh(1) ** 2, rtol=1e-14, atol=0)
    assert np.allclose(geom.u, 1.175201, rtol=1e-6, atol=0)
    assert np.allclose(geom.theta, math.sinh(1) / math.tanh(1), rtol=1e-13, atol=0)
    assert geom.convex and geom.convexity_info() is None


def _random_field(n, m, coef):
    def fn(x):
        return coef[0] + sum(c * np.cos((k + 1) * x) for k, c in enumerate(coef[1:]))
    return field(n, m, fn)


smooth_coef = st.tuples(
    st.floats(0.6, 2.5), st.floats(-0.08, 0.08), st.floats(-0.04, 0.04), st.floats(-0.02, 0.02)
)


@given(st.integers(2, 5), smooth_coef)
def test_node_invariants(n, coef):
    geom = compute_geometry(_random_field(n, 96, coef))
    assert np.all(geom.w >= 1.0)
    assert np.allclose(geom.u, geom.phi / geom.w, rtol=1e-13, atol=0)
    assert np.all(geom.u > 0)
    K = geom.kappa_m * geom.kappa_o ** (n - 1)
    H = geom.kappa_m + (n - 1) * geom.kappa_o
    assert np.allclose(geom.K, K, rtol=1e-12, atol=0)
    assert np.allclose(geom.H, H, rtol=1e-12, atol=0)
    assert np.allclose(geom.dmu, geom.phi ** (n - 1) * geom.v, rtol=1e-14, atol=0)
    assert gradient_identity_residual(geom) <= 1e-12


@given(st.integers(2, 5), smooth_coef)
def test_convex_node_inequalities(n, coef):
    geom = compute_geometry(_random_field(n, 96, coef))
    if not geom.convex:
        return
    root = geom.gauss_root
    tol = 1e-12
    assert np.all(root <= geom.H / n * (1 + tol))
    assert np.all(geom.sigma[n - 1] * root >= n * geom.sigma[n] * (1 - tol))
    assert np.allclose(geom.theta, geom.u * root, rtol=1e-14, atol=0)


def test_am_gm_equality_only_when_umbilic():
    geom = compute_geometry(field(2, 128, lambda x: 1 + 0.1 * np.cos(x)))
    gap = geom.H / 2 - geom.gauss_root
    aniso = np.abs(geom.kappa_m - geom.kappa_o)
    assert np.all(gap[aniso > 1e-4] > 0)


def test_gradient_identity_constant_is_zero():
    geom = compute_geometry(field(3, 32, lambda x: np.full_like(x, 0.8)))
    assert gradient_identity_residual(geom) == 0.0


def test_convexity_loss_is_reported():
    # a deep dimple at the north pole
    geom = compute_geometry(field(2, 128, lambda x: 1.0 - 0.6 * np.exp(-(x / 0.25) ** 2)))
    assert not geom.convex
    j, km, ko = geom.convexity_info()
    assert min(km, ko) <= 0 and 0 <= j < 128
    assert np.isnan(geom.gauss_root[j])


@pytest.mark.parametrize("n", [2, 3, 4])
def test_minkowski_exact_on_sphere(n):
    geom = compute_geometry(field(n, 64, lambda x: np.full_like(x, 0.9)))
    for k in range(n):
        assert abs(minkowski_residual(geom, k)) <= 1e-10


@pytest.mark.parametrize("k", [0, 1])
def test_minkowski_second_order(k):
    ms = [128, 256, 512]
    res = [abs(minkowski_residual(compute_geometry(field(2, m, lambda x: 1 + 0.2 * np.cos(x))), k)) for m in ms]
    ratios = np.array(res[:-1]) / np.array(res[1:])
    assert np.all(np.abs(ratios - 4) < 0.4)


def test_minkowski_all_k_second_order_n4():
    ms = [128, 256]
    res = np.array([
        [minkowski_residual(compute_geometry(field(4, m, lambda x: 1 + 0.1 * np.cos(2 * x))), k) for k in range(4)]
        for m in ms
    ])
    assert np.all(np.log2(np.abs(res[0] / res[1])) > 1.9)


def test_minkowski_index_checked():
    geom = compute_geometry(field(2, 32, np.ones_like))
    for k in (-1, 2, 0.5):
        with pytest.raises(DomainError):
            minkowski_residual(geom, k)


def test_minkowski_degenerate_denominator(monkeypatch):
    geom = compute_geometry(field(2, 32, np.ones_like))
    import gaussflow.geometry as gm

    monkeypatch.setattr(gm, "minkowski_terms", lambda g, k: (0.0, 2.5))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert gm.minkowski_residual(geom, 0) == -2.5
    assert any(issubclass(w.category, DegenerateDenominatorWarning) for w in caught)
    lhs, rhs = minkowski_terms(geom, 0)
    assert lhs > 0 and rhs > 0
