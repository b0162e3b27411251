"""Closed-form constants: kernel normalization, Hardy constant, exponent map."""
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DiagnosticError, ParameterError

SUPPORTED_DIMS = (1, 2)


@dataclass(frozen=True)
class QuadratureSettings:
    """Tolerances and rule sizes used by the singular-kernel quadrature."""

    near_threshold: float = 4.0      # in cell widths; closer pairs use the exact route
    subdivision: int = 4             # sub-cells per side for closed-form integrands
    gauss_points: int = 8            # per sub-cell / per smooth panel
    angular_points: int = 128        # K(sigma) rule
    polar_points: int = 24           # per angular segment in the near-pair route
    direct_points: int = 48          # per mapped panel in the analytic-region route
    tail_tol: float = 1e-8           # truncation of radial shells


@dataclass(frozen=True)
class FracParams:
    d: int
    s: float
    quad: QuadratureSettings = field(default_factory=QuadratureSettings)

    def __post_init__(self):
        _check_ds(self.d, self.s)
        if not self.d > 2 * self.s:
            raise ParameterError(f"d > 2s violated (d={self.d}, s={self.s})")

    @property
    def a_ds(self):
        return normalization_constant(self.d, self.s)

    @property
    def alpha_max(self):
        return (self.d - 2 * self.s) / 2

    def closed_form(self):
        return ClosedFormConstants(
            lambda_star=hardy_constant(self.d, self.s),
            two_star_s=critical_exponent(self.d, self.s),
            alpha_max=self.alpha_max,
        )


@dataclass(frozen=True)
class ClosedFormConstants:
    lambda_star: float
    two_star_s: float
    alpha_max: float


def _check_ds(d, s):
    if d not in SUPPORTED_DIMS:
        raise ParameterError(f"dimension d={d} not supported (use 1 or 2)")
    if not 0.0 < s < 1.0:
        raise ParameterError(f"order s={s} must lie in (0, 1)")


def _check_subcritical(d, s):
    _check_ds(d, s)
    if not d > 2 * s:
        raise ParameterError(f"d > 2s violated (d={d}, s={s})")


def normalization_constant(d, s):
    """a_{d,s} = 2^{2s} s Gamma((d+2s)/2) / (pi^{d/2} Gamma(1-s)).

    Only the range of ``s`` and ``d`` is checked here, so the formula can be
    evaluated at d = 2s as a consistency check.
    """
    _check_ds(d, s)
    return 4.0**s * s * math.gamma((d + 2 * s) / 2) / (math.pi ** (d / 2) * math.gamma(1 - s))


def hardy_constant(d, s):
    _check_subcritical(d, s)
    return 4.0**s * (math.gamma((d + 2 * s) / 4) / math.gamma((d - 2 * s) / 4)) ** 2


def lambda_alpha(d, s, alpha):
    """Hardy eigenvalue attached to the exponent parameter ``alpha``.

    The singular profile realising this value is ``|x|^{-((d-2s)/2 - alpha)}``;
    ``alpha = 0`` recovers :func:`hardy_constant`.
    """
    _check_subcritical(d, s)
    amax = (d - 2 * s) / 2
    if not 0.0 <= alpha < amax:
        raise ParameterError(f"alpha={alpha} outside [0, {amax})")
    num = math.gamma((d + 2 * s + 2 * alpha) / 4) * math.gamma((d + 2 * s - 2 * alpha) / 4)
    den = math.gamma((d - 2 * s + 2 * alpha) / 4) * math.gamma((d - 2 * s - 2 * alpha) / 4)
    return 4.0**s * num / den


def sampled_monotone(d, s, samples=100):
    """True when lambda_alpha is strictly decreasing on ``samples`` equispaced alphas."""
    amax = (d - 2 * s) / 2
    alphas = np.linspace(0.0, amax, samples, endpoint=False)
    vals = np.array([lambda_alpha(d, s, a) for a in alphas])
    return bool(np.all(np.diff(vals) < 0))


def alpha_of_lambda(d, s, lam, tol=1e-10):
    """Invert :func:`lambda_alpha` by bisection."""
    _check_subcritical(d, s)
    lam_star = hardy_constant(d, s)
    if not 0.0 < lam <= lam_star:
        raise ParameterError(f"lambda={lam} outside (0, {lam_star}]")
    if lam == lam_star:
        return 0.0
    if not sampled_monotone(d, s):
        raise DiagnosticError("lambda_alpha is not monotone on the sampled bracket")
    lo, hi = 0.0, (d - 2 * s) / 2
    mid = lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        val = lambda_alpha(d, s, mid)
        if abs(val - lam) < 0.01 * tol:
            break
        if val > lam:
            lo = mid
        else:
            hi = mid
    return mid


def profile_exponent(d, s, lam):
    """Singularity exponent gamma with u ~ |x|^{-gamma} for Hardy eigenvalue ``lam``."""
    return (d - 2 * s) / 2 - alpha_of_lambda(d, s, lam)


def critical_exponent(d, s):
    _check_subcritical(d, s)
    fs = Fraction(s)
    return float(Fraction(2 * d) / (d - 2 * fs))
