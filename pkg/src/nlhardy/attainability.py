"""Sign test for N_s w, the Example-1 decomposition, and a refinement-trend verdict."""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .assembly import assemble
from .constants import hardy_constant
from .errors import DomainError, ParameterError, ValidationError
from .geometry import NEUMANN, OMEGA, Example1Region, build_grid, label_example1
from .kernel import angular_kernel, hardy_profile, neumann_many, radial_neumann
from .spectral import singularity_exponent_fit, smallest_hardy_eigen

SUFFICIENT = "SUFFICIENT_CONDITION_HOLDS"
INCONCLUSIVE = "INCONCLUSIVE"
ATTAINED_LIKE = "ATTAINED-LIKE"
NOT_ATTAINED_LIKE = "NOT-ATTAINED-LIKE"

DRIFT_FACTOR = 5.0
EXPONENT_MARGIN = 0.05


@dataclass
class PointValue:
    x: tuple
    value: float
    error: float
    J1: float = None
    J2: float = None
    J3: float = None


@dataclass
class AttainabilityReport:
    min_Nsw: float
    budget: float
    verdict: str
    points: list = field(default_factory=list)
    trend: list = field(default_factory=list)


def _verdict_from(min_val, budget):
    return SUFFICIENT if min_val > budget else INCONCLUSIVE


def neumann_sign_test(config, params, sample_stride=1, with_j=False):
    """Evaluate N_s w, w = |x|^{-(d-2s)/2}, at every ``sample_stride``-th N cell center."""
    n_idx = np.flatnonzero(config.mask(NEUMANN))
    if len(n_idx) == 0:
        raise ValidationError("configuration has no Neumann cells")
    if config.labels[config.origin_index] != OMEGA:
        raise ValidationError("the pole of w must lie in Omega")
    idx = n_idx[::max(int(sample_stride), 1)]
    xs = config.centers[idx]
    w = hardy_profile(params.d, params.s)
    vals, errs = neumann_many(w, xs, config, params, with_error=True)
    region = config.region
    points = []
    for x, v, e in zip(xs, vals, errs):
        pv = PointValue(tuple(float(c) for c in x), float(v), float(e))
        if with_j and isinstance(region, Example1Region) and params.d == 2:
            pv.J1, pv.J2, pv.J3 = j_decomposition(x, region.params, params)
        points.append(pv)
    k = int(np.argmin(vals))
    min_val = float(vals[k])
    budget = float(np.max(errs))
    return AttainabilityReport(min_Nsw=min_val, budget=budget,
                               verdict=_verdict_from(min_val, budget), points=points)


def _cylinder_integral(x, p, params):
    """int over the thin cylinder piece of (w(x) - w(y)) |x - y|^{-d-2s} dy (2-D)."""
    s = params.s
    g = (params.d - 2 * s) / 2
    wx = float(np.hypot(*x)) ** (-g)

    def f(y1, y2):
        r2 = (x[0] - y1) ** 2 + (x[1] - y2) ** 2
        return (wx - math.hypot(y1, y2) ** (-g)) * r2 ** (-1.0 - s)

    def top(y2):
        return math.sqrt(max(p.A_len**2 - y2 * y2, 0.0))

    val, _ = integrate.dblquad(f, -p.eps, p.eps, lambda y2: p.eps, top,
                               epsabs=1e-12, epsrel=1e-10)
    return val


def j_decomposition(x, p, params):
    """(J1, J2, J3): integrals of (w(x) - w(y)) dnu_y over ball, cylinder and annulus."""
    x = np.asarray(x, dtype=float)
    region = Example1Region(p, d=params.d)
    if region.label_points(x[None, :])[0] != NEUMANN:
        raise DomainError("x is not in the Neumann set of Example 1")
    w = hardy_profile(params.d, params.s)
    r = float(np.linalg.norm(x))
    J1 = radial_neumann(w, r, 0.0, p.eps, params)
    J3 = radial_neumann(w, r, p.A_len, p.beta, params)
    if params.d == 1:
        y = np.array([p.eps, p.A_len])
        J2 = integrate.quad(lambda t: (r ** -w.exponent - t ** -w.exponent)
                            * abs(x[0] - t) ** (-1 - 2 * params.s), *y, limit=200)[0]
    else:
        J2 = _cylinder_integral(x, p, params)
    return J1, J2, J3


def j3_lower_bound(p, params):
    """A^{-alpha0-2s} int_2^{beta/A} (1 - sigma^{-alpha0}) sigma^{d-1} K(sigma) dsigma.

    Valid for every x in N with A <= 2|x| and beta >= 2A.
    """
    if p.beta < 2 * p.A_len:
        raise ParameterError("the bound needs beta >= 2 A")
    a0 = (params.d - 2 * params.s) / 2

    def f(sig):
        return (1.0 - sig ** (-a0)) * sig ** (params.d - 1) * angular_kernel(sig, params)

    val, _ = integrate.quad(f, 2.0, p.beta / p.A_len, limit=200, epsrel=1e-10)
    return p.A_len ** (-a0 - 2 * params.s) * val


@dataclass
class SweepRow:
    eps: float
    min_Nsw: float
    budget: float
    verdict: str
    J1: float
    J2: float
    J3: float
    direct: float


def eps_sweep(eps_values, base, params, L=3.0, n=48, probe=None, sample_stride=1):
    """Sign test for a range of eps with the other Example-1 parameters fixed.

    ``base`` supplies eta, A_len, m, beta.  ``probe`` is a fixed point of N at
    which the J-decomposition and the direct value are recorded.
    """
    from .geometry import Example1Params

    if probe is None:
        probe = np.array([0.0, 0.5 * (base.eta + base.A_len)])
    probe = np.asarray(probe, dtype=float)
    grid = build_grid(params.d, L, n)
    rows = []
    for eps in eps_values:
        p = Example1Params(float(eps), base.eta, base.A_len, base.m, base.beta)
        cfg = label_example1(grid, p)
        rep = neumann_sign_test(cfg, params, sample_stride)
        J1, J2, J3 = j_decomposition(probe, p, params)
        direct = float(neumann_many(hardy_profile(params.d, params.s), probe[None, :], cfg,
                                    params)[0])
        rows.append(SweepRow(float(eps), rep.min_Nsw, rep.budget, rep.verdict, J1, J2, J3, direct))
    return rows


@dataclass
class TrendReport:
    verdict: str
    trend: list
    drift: float
    lambda_star: float
    extrapolated: float


def _default_window(config):
    r = np.linalg.norm(config.centers, axis=1)
    outside = r[config.labels != OMEGA]
    r_in = float(outside.min()) if len(outside) else config.L
    return (2.0 * config.h, 0.5 * r_in), r_in


def attainability_verdict(levels, config_builder, params, tol=1e-10):
    """Refinement-trend heuristic: compare lambda_h and the fitted exponent with Lambda.

    ``levels`` are grid sizes n (at least three); ``config_builder(n)`` returns
    the configuration at that level.  The limit is extrapolated with the model
    lambda_h = lambda_inf + c / log(r_in / h), the rate of a truncated critical
    profile.
    """
    levels = list(levels)
    if len(levels) < 3:
        raise ParameterError("at least three refinement levels are needed")
    lam_star = hardy_constant(params.d, params.s)
    crit = (params.d - 2 * params.s) / 2
    trend, ell = [], []
    for n in levels:
        cfg = config_builder(n)
        forms = assemble(cfg, params)
        res = smallest_hardy_eigen(forms, tol=tol)
        window, r_in = _default_window(cfg)
        fit = singularity_exponent_fit(forms.full(res.eigvec), cfg, window)
        trend.append((cfg.h, res.lambda_h, fit.alpha_hat))
        ell.append(math.log(r_in / cfg.h))
    lam = np.array([t[1] for t in trend])
    alpha = np.array([t[2] for t in trend])
    drift = float(abs(lam[-1] - lam[-2]))
    slope, icept = np.polyfit(1.0 / np.array(ell), lam, 1)
    extrap = float(icept)
    if lam_star - lam[-1] > DRIFT_FACTOR * drift and alpha[-1] < crit - EXPONENT_MARGIN:
        verdict = ATTAINED_LIKE
    elif (abs(extrap - lam_star) < DRIFT_FACTOR * drift and np.all(np.diff(lam) < 0)
          and np.all(np.diff(np.abs(alpha - crit)) <= 0)):
        verdict = NOT_ATTAINED_LIKE
    else:
        verdict = INCONCLUSIVE
    return TrendReport(verdict=verdict, trend=trend, drift=drift, lambda_star=lam_star,
                       extrapolated=extrap)
