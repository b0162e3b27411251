import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from nlhardy.constants import FracParams
from nlhardy.errors import DomainError, ParameterError
from nlhardy.geometry import OMEGA, FarField, build_grid, label_ball_config
from nlhardy.kernel import (Constant, RadialPower, angular_kernel, box_exterior_integral,
                            frac_laplacian_at, gauss_nodes, neumann_at, pair_weight,
                            radial_neumann, tail_weight, unit_weight_1d_exact,
                            unit_weight_1d_gauss, unit_weight_2d_gauss, unit_weight_2d_polar,
                            unit_weight_table)


def test_gauss_nodes_shapes():
    x, w = gauss_nodes(5, 0.0, 2.0)
    assert x.shape == w.shape == (5,)
    assert w.sum() == pytest.approx(2.0)
    x, w = gauss_nodes(4, np.zeros((3, 2)), np.ones((3, 2)))
    assert x.shape == (3, 2, 4)


# ---------------------------------------------------------------- pair weights

@pytest.mark.parametrize("s", [0.1, 0.25, 0.4])
def test_touching_cells_1d_against_mpmath(s):
    # difference variable t = y - x, then t = 2h u^m with m = 1/(2-q) to remove
    # the endpoint singularity before tanh-sinh quadrature
    mpmath.mp.dps = 30
    q = 1 + 2 * mpmath.mpf(s)
    h = mpmath.mpf(3) / 10
    m = 1 / (2 - q)

    def f(u):
        t = 2 * h * u**m
        return min(t, 2 * h - t) * t ** (-q) * 2 * h * m * u ** (m - 1)

    oracle = mpmath.quad(f, [0, mpmath.mpf(2) ** (-1 / m), 1])
    grid = build_grid(1, 1.2, 8)
    assert pair_weight(grid, 3, 4, FracParams(1, s)) == pytest.approx(float(oracle), rel=1e-8)


@pytest.mark.parametrize("s", [0.1, 0.25, 0.45])
def test_touching_weight_scaling(s):
    # halving h: x -> x/2 in both integrals gives the factor 2^{-(d-2s)} = 2^{-(1-2s)}
    p = FracParams(1, s)
    coarse = pair_weight(build_grid(1, 1.0, 16), 7, 8, p)
    fine = pair_weight(build_grid(1, 0.5, 16), 7, 8, p)
    assert fine / coarse == pytest.approx(2.0 ** (-(1 - 2 * s)), rel=1e-13)


def test_1d_exact_matches_gauss_far():
    k = np.arange(5, 40, dtype=float)
    assert np.allclose(unit_weight_1d_exact(k, 0.3), unit_weight_1d_gauss(k, 0.3), rtol=1e-11)


def _tent_2d_oracle(k1, k2, s):
    q = 2 + 2 * s

    def f(t2, t1):
        return (1 - abs(t1 - k1)) * (1 - abs(t2 - k2)) * (t1 * t1 + t2 * t2) ** (-q / 2)

    total = 0.0
    for a in (k1 - 1, k1):
        for b in (k2 - 1, k2):
            total += integrate.dblquad(f, a, a + 1, b, b + 1, epsabs=1e-14, epsrel=1e-12)[0]
    return total


@pytest.mark.parametrize("k", [(1, 1), (2, 0), (2, 1), (3, 2), (4, 0)])
def test_2d_near_weights(k):
    assert unit_weight_2d_polar(*k, 0.25) == pytest.approx(_tent_2d_oracle(*k, 0.25), rel=1e-9)


@pytest.mark.parametrize("k", [(5, 0), (4, 4), (9, 3)])
def test_2d_far_weights(k):
    got = unit_weight_2d_gauss(np.array([k], dtype=float), 0.3)[0]
    assert got == pytest.approx(_tent_2d_oracle(*k, 0.3), rel=1e-9)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_2d_touching_weight_against_direct_integral():
    # (1, 0): the face-sharing pair, directly as a 4-fold integral via the
    # difference variable: int_{[0,1]^2} int_{[1,2]x[0,1]} |x - y|^{-2-2s}
    s = 0.25
    assert unit_weight_2d_polar(1, 0, s) == pytest.approx(_tent_2d_oracle(1, 0, s), rel=1e-7)


def test_weight_table_symmetry():
    p = FracParams(2, 0.2)
    tab = unit_weight_table(2, 0.2, 10, p.quad).reshape(10, 10)
    assert np.allclose(tab, tab.T, rtol=0, atol=0)
    assert tab[0, 0] == 0.0
    assert np.all(tab[np.triu_indices(10, 1)] > 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 63), st.integers(0, 63))
def test_pair_weight_symmetric(i, j):
    grid = build_grid(2, 1.0, 8)
    p = FracParams(2, 0.25)
    if i == j:
        with pytest.raises(ParameterError):
            pair_weight(grid, i, j, p)
    else:
        assert pair_weight(grid, i, j, p) == pair_weight(grid, j, i, p)


def test_weights_need_small_s():
    with pytest.raises(ParameterError):
        unit_weight_1d_exact(1.0, 0.6)


# ---------------------------------------------------------------- tails

def test_tail_1d_closed_form_against_quad():
    p = FracParams(1, 0.3)
    lo, hi, R = 0.1, 0.3, 2.0
    inner = lambda x: (integrate.quad(lambda y: (y - x) ** (-1.6), R, np.inf)[0]
                       + integrate.quad(lambda y: (x - y) ** (-1.6), -np.inf, -R)[0])
    oracle = p.a_ds * integrate.quad(inner, lo, hi)[0]
    assert tail_weight(([lo], [hi]), R, p) == pytest.approx(oracle, rel=1e-10)


@pytest.mark.parametrize("d", [1, 2])
def test_tail_scales_like_radius_power(d):
    p = FracParams(d, 0.25)
    h = 0.01
    cell = (np.zeros(d), np.full(d, h))
    vals = [tail_weight(cell, R, p) * R ** 0.5 for R in (10.0, 20.0, 40.0)]
    assert vals[1] == pytest.approx(vals[0], rel=2e-3)
    assert vals[2] == pytest.approx(vals[1], rel=1e-3)
    assert tail_weight(cell, 1e6, p) < 1e-3 * tail_weight(cell, 1.0, p)


def test_tail_cell_must_be_inside():
    with pytest.raises(ParameterError):
        tail_weight(([0.9], [1.1]), 1.0, FracParams(1, 0.25))


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_box_exterior_2d_against_halfplanes():
    s, L = 0.25, 1.0
    lo, hi = np.array([0.2, -0.1]), np.array([0.45, 0.15])
    q = 2 + 2 * s

    def outside(x):
        f = lambda y2, y1: ((x[0] - y1) ** 2 + (x[1] - y2) ** 2) ** (-q / 2)
        parts = [integrate.dblquad(f, L, np.inf, -np.inf, np.inf)[0],
                 integrate.dblquad(f, -np.inf, -L, -np.inf, np.inf)[0],
                 integrate.dblquad(f, -L, L, L, np.inf)[0],
                 integrate.dblquad(f, -L, L, -np.inf, -L)[0]]
        return sum(parts)

    t1, w1 = gauss_nodes(4, lo[0], hi[0])
    t2, w2 = gauss_nodes(4, lo[1], hi[1])
    oracle = sum(a * b * outside((x, y)) for x, a in zip(t1, w1) for y, b in zip(t2, w2))
    got = box_exterior_integral(lo[None, :], hi[None, :], L, s)[0]
    assert got == pytest.approx(oracle, rel=1e-7)


# ---------------------------------------------------------------- K(sigma)

def _k_oracle(sigma, s):
    lam = 1 + s
    if sigma < 1:
        return 2 * math.pi * special.hyp2f1(lam, lam, 1, sigma * sigma)
    return sigma ** (-2 * lam) * _k_oracle(1 / sigma, s)


def test_k_at_zero():
    assert angular_kernel(0.0, FracParams(2, 0.3)) == pytest.approx(2 * math.pi, rel=1e-14)
    assert angular_kernel(0.0, FracParams(1, 0.3)) == pytest.approx(2.0)


def test_k_1d_arithmetic():
    assert angular_kernel(0.5, FracParams(1, 0.25)) == pytest.approx(
        0.5**-1.5 + 1.5**-1.5, rel=1e-15)
    assert angular_kernel(0.5, FracParams(1, 0.25)) == pytest.approx(3.3728, abs=1e-4)


@pytest.mark.parametrize("sigma", [0.1, 0.5, 0.9, 0.97, 0.995, 1.005, 1.1, 2.0, 5.0])
def test_k_2d_against_hypergeometric(sigma):
    p = FracParams(2, 0.25)
    assert angular_kernel(sigma, p) == pytest.approx(_k_oracle(sigma, 0.25), rel=1e-9)


def test_k_singular_at_one():
    p = FracParams(2, 0.25)
    with pytest.raises(DomainError):
        angular_kernel(1.0, p)
    vals = [angular_kernel(1 - 10.0**-k, p) for k in (1, 2, 3)]
    assert vals[0] < vals[1] < vals[2]


# ---------------------------------------------------------------- operators

@pytest.fixture(scope="module")
def small_2d():
    grid = build_grid(2, 1.0, 16, FarField.NEUMANN_TRUNCATED)
    return label_ball_config(grid, 0.3, (0.6, 0.9)), FracParams(2, 0.25)


def test_neumann_of_constant_is_zero(small_mixed, p1, small_2d):
    assert neumann_at(Constant(2.0), [0.6], small_mixed, p1) == pytest.approx(0.0, abs=1e-13)
    cfg, p = small_2d
    assert neumann_at(Constant(1.0), [0.45, 0.1], cfg, p) == pytest.approx(0.0, abs=1e-13)


def test_neumann_of_positive_bump_is_negative(small_mixed, p1):
    u = np.where(small_mixed.mask(OMEGA), 1.0 + small_mixed.centers[:, 0] ** 2, 0.0)
    assert neumann_at(u, [0.6], small_mixed, p1) < 0


def test_neumann_inside_omega(small_mixed, p1):
    with pytest.raises(DomainError):
        neumann_at(Constant(), [0.1], small_mixed, p1)


def test_neumann_grid_route_against_quad(small_mixed, p1):
    # Omega is the union of cells with |center| < 0.5, i.e. (-0.5, 0.5) here
    w = RadialPower(0.25)
    x = 0.6
    f = lambda y: (x ** -0.25 - abs(y) ** -0.25) * abs(x - y) ** -1.5
    oracle = p1.a_ds * (integrate.quad(f, -0.5, 0, limit=200)[0]
                        + integrate.quad(f, 0, 0.5, limit=200)[0])
    assert neumann_at(w, [x], small_mixed, p1) == pytest.approx(oracle, rel=1e-4)


def test_radial_neumann_inside_shell():
    with pytest.raises(DomainError):
        radial_neumann(RadialPower(0.25), 1.0, 0.5, 2.0, FracParams(2, 0.25))


def test_frac_laplacian_of_constant(p1):
    assert frac_laplacian_at(Constant(3.0), [0.4], p1) == pytest.approx(0.0, abs=1e-12)


def test_frac_laplacian_pole(p1):
    with pytest.raises(DomainError):
        frac_laplacian_at(RadialPower(0.2), [0.0], p1)


def test_frac_laplacian_2d_profile():
    from nlhardy.constants import lambda_alpha

    p = FracParams(2, 0.3)
    alpha = 0.2
    gamma = p.alpha_max - alpha
    x = np.array([0.3, -0.4])
    r = np.linalg.norm(x)
    val = frac_laplacian_at(RadialPower(gamma), x, p) * r ** 0.6 / r ** (-gamma)
    assert val == pytest.approx(lambda_alpha(2, 0.3, alpha), abs=1e-6)
