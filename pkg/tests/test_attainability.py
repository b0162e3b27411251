import numpy as np
import pytest

from nlhardy.attainability import (ATTAINED_LIKE, INCONCLUSIVE, NOT_ATTAINED_LIKE, SUFFICIENT,
                                   attainability_verdict, j3_lower_bound, j_decomposition,
                                   neumann_sign_test)
from nlhardy.constants import FracParams
from nlhardy.errors import DomainError, ParameterError, ValidationError
from nlhardy.geometry import (Example1Params, FarField, build_grid, full_dirichlet,
                              label_ball_config, label_example1, shrinking_family)
from nlhardy.kernel import Constant, hardy_profile, neumann_many

P2 = FracParams(2, 0.25)
BASE = dict(eta=0.9, A_len=1.2, m=0.9, beta=2.7)


@pytest.fixture(scope="module")
def example1():
    p = Example1Params(0.02, **BASE)
    return label_example1(build_grid(2, 3.0, 48), p)


def test_small_eps_gives_positive_sign(example1):
    rep = neumann_sign_test(example1, P2, sample_stride=3)
    assert rep.min_Nsw > rep.budget > 0
    assert rep.verdict == SUFFICIENT


def test_neumann_next_to_omega_is_negative(p1, mixed_1d):
    rep = neumann_sign_test(mixed_1d, p1)
    assert rep.min_Nsw < 0
    assert rep.verdict == INCONCLUSIVE


def test_constant_gives_zero(example1):
    xs = example1.centers[example1.mask(2)][::40]
    vals = neumann_many(Constant(1.0), xs, example1, P2)
    assert np.abs(vals).max() < 1e-12


def test_needs_neumann_cells(p1):
    cfg = full_dirichlet(build_grid(1, 1.0, 16), 0.5)
    with pytest.raises(ValidationError):
        neumann_sign_test(cfg, p1)


def test_j_parts_sum_to_direct(example1):
    x = np.array([0.0, 1.05])
    J = j_decomposition(x, example1.region.params, P2)
    direct = neumann_many(hardy_profile(2, 0.25), x[None, :], example1, P2)[0]
    assert P2.a_ds * sum(J) == pytest.approx(direct, rel=1e-3)


def test_j1_vanishes_with_eps():
    x = np.array([0.0, 1.05])
    a0 = P2.alpha_max
    ratios = []
    for eps in (0.1, 0.05, 0.025, 0.0125):
        J1 = j_decomposition(x, Example1Params(eps, **BASE), P2)[0]
        ratios.append(abs(J1) / eps ** (2 - a0))
    # |J1| <= C eps^{d - alpha0}: the ratio settles to a constant
    assert max(ratios) < 5.0
    steps = np.abs(np.diff(ratios))
    assert np.all(np.diff(steps) < 0)


def test_j3_lower_bound():
    p = Example1Params(0.02, **BASE)
    bound = j3_lower_bound(p, P2)
    assert bound > 0
    for x in ([0.0, 1.05], [0.0, -0.95], [-1.0, 0.3]):
        J3 = j_decomposition(np.array(x), p, P2)[2]
        assert J3 >= bound
    with pytest.raises(ParameterError):
        j3_lower_bound(Example1Params(0.02, 0.9, 1.2, 0.9, 2.3), P2)


def test_j_outside_neumann():
    p = Example1Params(0.02, **BASE)
    with pytest.raises(DomainError):
        j_decomposition(np.array([0.5, 0.0]), p, P2)      # on the cylinder


def test_full_dirichlet_not_attained(p1):
    rep = attainability_verdict([64, 128, 256],
                                lambda n: full_dirichlet(build_grid(1, 1.0, n), 0.5), p1)
    assert rep.verdict == NOT_ATTAINED_LIKE
    lam = [t[1] for t in rep.trend]
    assert lam[0] > lam[1] > lam[2] > rep.lambda_star


def test_large_neumann_set_attained(p1):
    def build(n):
        grid = build_grid(1, 2.0, n, FarField.NEUMANN_TRUNCATED)
        return shrinking_family(grid, label_ball_config(grid, 0.5, (0.75, 2.0)), 8)

    rep = attainability_verdict([128, 256, 512], build, p1)
    assert rep.verdict == ATTAINED_LIKE
    assert rep.trend[-1][1] < 0.1 * rep.lambda_star


def test_verdict_needs_three_levels(p1):
    with pytest.raises(ParameterError):
        attainability_verdict([64, 128], lambda n: full_dirichlet(build_grid(1, 1.0, n), 0.5), p1)
