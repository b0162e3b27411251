import math

import numpy as np
import pytest

from nlhardy.assembly import assemble
from nlhardy.errors import ConvergenceError, ParameterError
from nlhardy.geometry import FarField, build_grid, full_dirichlet, label_ball_config, shrinking_family
from nlhardy.semilinear import (SemilinearSpec, critical_constants, existence_condition_check,
                                hardy_sobolev_value, lambda_bar_search, minimize_quotient,
                                quotient, s_lambda_estimate, sobolev_constant,
                                subcritical_minimize)
from nlhardy.spectral import smallest_hardy_eigen


@pytest.fixture(scope="module")
def setup(p1):
    grid = build_grid(1, 2.0, 64, FarField.NEUMANN_TRUNCATED)
    forms = assemble(label_ball_config(grid, 0.5, (0.75, 2.0)), p1)
    res = smallest_hardy_eigen(forms, tol=1e-12)
    lam_d = smallest_hardy_eigen(assemble(full_dirichlet(build_grid(1, 2.0, 64), 0.5), p1),
                                 tol=1e-12).lambda_h
    return forms, res, lam_d


@pytest.fixture(scope="module")
def sobolev(setup):
    return sobolev_constant(setup[0], restarts=8, seed=0)


def test_minimum_below_eigenfunction_value(setup):
    forms, res, lam_d = setup
    lam = 0.5 * (res.lambda_h + lam_d)
    u = res.eigvec
    numer = forms.energy(u) - lam * forms.hardy(u)
    assert numer == pytest.approx((res.lambda_h - lam) * forms.hardy(u), rel=1e-9)
    assert numer < 0
    out = subcritical_minimize(forms, SemilinearSpec(lam, 2.0), tol=1e-8,
                               window=(res.lambda_h, lam_d))
    assert out.value <= quotient(forms, u, lam, 3.0) + 1e-12
    assert out.el_residual < 1e-8
    assert np.all(out.minimizer >= 0)


def test_quotient_nonnegative_below_lambda_n(setup):
    forms, res, _ = setup
    rng = np.random.default_rng(5)
    for _ in range(50):
        u = rng.standard_normal(forms.size)
        assert quotient(forms, u, 0.9 * res.lambda_h, 3.0) >= 0


def test_window_and_exponent_checks(setup):
    forms, res, lam_d = setup
    with pytest.raises(ParameterError):
        subcritical_minimize(forms, SemilinearSpec(0.5 * res.lambda_h, 2.0),
                             window=(res.lambda_h, lam_d))
    with pytest.raises(ParameterError):
        subcritical_minimize(forms, SemilinearSpec(res.lambda_h * 1.1, 3.5))
    with pytest.raises(ParameterError):
        minimize_quotient(forms, forms.A, 2.0, res.eigvec)


def test_stall_reports_history(setup):
    forms, res, lam_d = setup
    lam = 0.5 * (res.lambda_h + lam_d)
    B = forms.A - lam * np.diag(forms.H)
    with pytest.raises(ConvergenceError) as info:
        minimize_quotient(forms, B, 3.0, np.ones(forms.size), tol=1e-14, max_iter=2)
    assert len(info.value.last.history) >= 2


def test_regularization_sweep(setup):
    forms, res, lam_d = setup
    lam = 0.5 * (res.lambda_h + lam_d)
    vals = [subcritical_minimize(forms, SemilinearSpec(lam, 2.0, n), tol=1e-8).value
            for n in (1.0, 10.0, 100.0, math.inf)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_sobolev_restarts_agree(sobolev):
    assert sobolev.value > 0
    assert sobolev.spread < 0.05
    assert sobolev.value == min(sobolev.values)


def test_restarts_are_seeded(setup):
    a = sobolev_constant(setup[0], restarts=3, seed=11)
    b = sobolev_constant(setup[0], restarts=3, seed=11)
    assert a.values == b.values


def test_t_at_zero_is_s_n(setup, sobolev):
    forms, res, _ = setup
    c = critical_constants(forms, 1.0, 0.0, restarts=8, seed=0, lambda_N=res.lambda_h,
                           sobolev=sobolev)
    assert c.T == pytest.approx(c.S_N, rel=1e-8)
    assert c.lower_bound == c.S_N


@pytest.mark.parametrize("frac", [0.3, 0.7, 0.95])
def test_discrete_lower_bound(setup, sobolev, frac):
    forms, res, _ = setup
    lam = frac * res.lambda_h
    c = critical_constants(forms, 1.0, lam, restarts=8, seed=0, lambda_N=res.lambda_h,
                           sobolev=sobolev)
    assert c.T >= c.lower_bound - 1e-10 * c.S_N
    # the bound comes from u'Au - lam u'Hu >= (1 - lam/Lambda_N) u'Au
    u = c.T_minimizer
    assert forms.energy(u) - lam * forms.hardy(u) >= (1 - lam / res.lambda_h) * forms.energy(u) - 1e-12


def test_lambda_range(setup, sobolev):
    forms, res, _ = setup
    with pytest.raises(ParameterError):
        critical_constants(forms, 1.0, res.lambda_h, lambda_N=res.lambda_h, sobolev=sobolev)


def test_existence_near_lambda_n(p1, setup, sobolev):
    forms, res, _ = setup
    lam = 0.95 * res.lambda_h
    sl = s_lambda_estimate(p1, lam, forms.h, [1.0, 2.0, 3.0])
    c = critical_constants(forms, sl, lam, restarts=8, seed=0, lambda_N=res.lambda_h,
                           sobolev=sobolev)
    assert existence_condition_check(c).condition_holds
    c0 = critical_constants(forms, s_lambda_estimate(p1, 0.0, forms.h, [1.0, 2.0, 3.0]), 0.0,
                            restarts=8, seed=0, lambda_N=res.lambda_h, sobolev=sobolev)
    assert not existence_condition_check(c0).condition_holds


def test_s_lambda_boxes(p1, setup):
    sl = s_lambda_estimate(p1, 0.05, setup[0].h, [1.0, 2.0, 3.0])
    vals = [v for _, v in sl.per_box]
    assert vals[0] > vals[1] > vals[2] > 0
    assert sl.value <= min(vals)
    assert sl.uncertainty > 0


def test_lambda_bar_window(setup):
    forms, res, lam_d = setup
    grid = np.linspace(0.0, res.lambda_h, 50, endpoint=False)
    bar = lambda_bar_search(forms, grid, 0.5, 0.4, lambda_dir=lam_d)
    assert 0 < bar.lambda_bar < res.lambda_h
    assert bar.rows[-1][3]
    with pytest.raises(ParameterError):
        lambda_bar_search(forms, grid, 0.5, 0.4, lambda_dir=0.5 * res.lambda_h)


def test_lambda_bar_follows_lambda_n(p1):
    grid = build_grid(1, 2.0, 64, FarField.NEUMANN_TRUNCATED)
    base = label_ball_config(grid, 0.5, (0.75, 2.0))
    bars, lams = [], []
    for k in (0, 2):
        forms = assemble(shrinking_family(grid, base, k), p1)
        ln = smallest_hardy_eigen(forms, tol=1e-12).lambda_h
        bar = lambda_bar_search(forms, np.linspace(0, ln, 400, endpoint=False), 0.5, 0.4)
        bars.append(bar.lambda_bar)
        lams.append(ln)
    assert lams[1] < lams[0]
    assert bars[1] < bars[0]


def test_hardy_sobolev_decreasing_in_lambda(setup):
    forms, res, _ = setup
    vals = [hardy_sobolev_value(forms, f * res.lambda_h, restarts=2).value for f in (0, 0.5, 0.9)]
    assert vals[0] > vals[1] > vals[2] > 0
