import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from nlhardy.assembly import assemble
from nlhardy.constants import FracParams
from nlhardy.errors import ParameterError
from nlhardy.geometry import FarField, build_grid, label_ball_config, neumann_only
from nlhardy.inequalities import (fuzz_suite, green_identity_check, hardy_quotient,
                                  picone_check, poincare_constant, poincare_quotient,
                                  regional_energy, sobolev_quotient)
from nlhardy.spectral import smallest_hardy_eigen


@pytest.fixture(scope="module")
def forms(p1, small_mixed):
    return assemble(small_mixed, p1)


@pytest.fixture(scope="module")
def lam_n(forms):
    return smallest_hardy_eigen(forms, tol=1e-13)


def _positive(forms, seed):
    return np.exp(np.random.default_rng(seed).standard_normal(forms.size))


def test_picone_equality(forms):
    u = _positive(forms, 0)
    assert picone_check(u, u, forms).margin == pytest.approx(0.0, abs=1e-12)
    res = picone_check(u, 3 * u, forms)
    assert abs(res.margin) <= 1e-12 * abs(res.rhs)
    assert res.remainder == pytest.approx(0.0, abs=1e-12 * abs(res.rhs))


def test_picone_random_pairs(forms):
    rng = np.random.default_rng(1)
    for _ in range(200):
        u = np.exp(rng.standard_normal(forms.size))
        v = rng.standard_normal(forms.size)
        res = picone_check(u, v, forms)
        assert res.margin >= -1e-10 * max(1.0, res.rhs)
        assert res.margin == pytest.approx(res.remainder, rel=1e-9, abs=1e-12 * res.rhs)


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_picone_property(forms, data):
    u = data.draw(hnp.arrays(float, forms.size, elements=st.floats(0.05, 20.0)))
    v = data.draw(hnp.arrays(float, forms.size, elements=st.floats(-5.0, 5.0)))
    res = picone_check(u, v, forms)
    assert res.margin >= -1e-9 * max(1.0, res.rhs)


def test_picone_needs_positive_u(forms):
    u = np.ones(forms.size)
    u[3] = 0.0
    with pytest.raises(ParameterError):
        picone_check(u, u, forms)


def test_green_identity(forms):
    rng = np.random.default_rng(2)
    for _ in range(50):
        u, v = rng.standard_normal((2, forms.size))
        assert green_identity_check(u, v, forms) < 1e-12 * max(1.0, abs(v @ forms.A @ u))


def test_green_constant_without_dirichlet(p1):
    cfg = neumann_only(build_grid(1, 2.0, 32, FarField.NEUMANN_TRUNCATED), 0.5)
    f = assemble(cfg, p1)
    one = np.ones(f.size)
    assert green_identity_check(one, one, f) < 1e-12
    assert abs(f.energy(one)) < 1e-12


def test_hardy_quotient_minimum(forms, lam_n):
    assert hardy_quotient(lam_n.eigvec, forms) == pytest.approx(lam_n.lambda_h, rel=1e-10)
    rng = np.random.default_rng(3)
    for _ in range(500):
        u = rng.standard_normal(forms.size)
        assert hardy_quotient(u, forms) >= lam_n.lambda_h - 1e-10


def test_zero_denominators(forms):
    u = np.where(forms.is_omega, 0.0, 1.0)
    for fn in (hardy_quotient, poincare_quotient, sobolev_quotient):
        with pytest.raises(ParameterError):
            fn(u, forms)


def test_poincare_constant_is_minimum(forms):
    c = poincare_constant(forms)
    rng = np.random.default_rng(4)
    assert c > 0
    assert min(poincare_quotient(rng.standard_normal(forms.size), forms)
               for _ in range(100)) >= c - 1e-10


def test_regional_energy_below_full(forms):
    rng = np.random.default_rng(5)
    u = np.where(forms.is_omega, rng.standard_normal(forms.size), 0.0)
    assert 0 <= regional_energy(u, forms) <= forms.energy(u)


def test_fuzz_deterministic(forms):
    a = fuzz_suite(forms, seed=7, trials=20, sobolev_value=0.3)
    b = fuzz_suite(forms, seed=7, trials=20, sobolev_value=0.3)
    assert [(r.name, r.worst_margin, r.failures) for r in a] == \
           [(r.name, r.worst_margin, r.failures) for r in b]
    assert fuzz_suite(forms, seed=7, trials=0) == []


def test_fuzz_flags_wrong_sobolev_value(forms):
    # an overstated Sobolev constant must show up as failures
    reports = {r.name: r for r in fuzz_suite(forms, seed=0, trials=10, sobolev_value=1e6)}
    assert len(reports["sobolev"].failures) == 10
    assert reports["picone"].failures == []


def test_fuzz_2d():
    p = FracParams(2, 0.3)
    grid = build_grid(2, 1.0, 24, FarField.NEUMANN_TRUNCATED)
    cfg = label_ball_config(grid, 0.4, (0.6, 0.9))
    reports = fuzz_suite(cfg, seed=0, trials=30, params=p)
    assert all(r.failures == [] for r in reports), [r.name for r in reports if r.failures]
