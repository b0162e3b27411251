"""Seeded property checks of the discrete inequalities and identities."""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl

from . import _kernels
from .assembly import NonlocalForms, assemble, discrete_operators, lp_functional
from .constants import critical_exponent
from .errors import ParameterError
from .spectral import smallest_hardy_eigen

QUOTIENT_SLACK = 1e-10
IDENTITY_TOL = 1e-12


@dataclass
class PiconeResult:
    margin: float       # v'Av - sum_i (v_i^2 / u_i) (A u)_i
    remainder: float    # explicit nonnegative pair sum
    lhs: float
    rhs: float


def picone_check(u, v, forms):
    """Discrete Picone inequality for u > 0 on Omega and N."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(u <= 0.0):
        raise ParameterError("Picone needs u > 0 on every Omega and N cell")
    lap, neu = discrete_operators(forms, u)
    ratio = v * v / u
    lhs = float(ratio[forms.is_omega] @ lap + ratio[forms.is_neumann] @ neu)
    rhs = forms.energy(v)
    rem = _kernels.picone_remainder(forms.C, u, v)
    return PiconeResult(margin=rhs - lhs, remainder=rem, lhs=lhs, rhs=rhs)


def green_identity_check(u, v, forms):
    """|sum_Omega v (-Delta)^s_h u + sum_N v N_{s,h} u - v'Au|."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    lap, neu = discrete_operators(forms, u)
    total = float(v[forms.is_omega] @ lap) + float(v[forms.is_neumann] @ neu)
    return abs(total - float(v @ (forms.A @ u)))


def hardy_quotient(u, forms):
    den = forms.hardy(u)
    if not den > 0:
        raise ParameterError("u'Hu must be positive")
    return forms.energy(u) / den


def poincare_quotient(u, forms):
    u = np.asarray(u, dtype=float)
    den = float(np.sum((forms.M * u * u)[forms.is_omega]))
    if not den > 0:
        raise ParameterError("u vanishes on Omega")
    return forms.energy(u) / den


def sobolev_quotient(u, forms):
    q = critical_exponent(forms.params.d, forms.params.s)
    den = lp_functional(u, q, forms)
    if not den > 0:
        raise ParameterError("u vanishes on Omega")
    return forms.energy(u) / den**2


def regional_energy(u, forms):
    """Energy restricted to Omega x Omega pairs (same normalization as A)."""
    u = np.asarray(u, dtype=float)
    om = forms.is_omega
    C = forms.C[np.ix_(om, om)]
    uo = u[om]
    return float(uo @ (np.diag(C.sum(axis=1)) - C) @ uo)


def regional_hardy_quotient(u, forms):
    return regional_energy(u, forms) / hardy_quotient_denominator(u, forms)


def hardy_quotient_denominator(u, forms):
    den = forms.hardy(u)
    if not den > 0:
        raise ParameterError("u'Hu must be positive")
    return den


def poincare_constant(forms):
    """min u'Au / int_Omega u^2 (Schur complement over N, dense)."""
    om, nm = forms.is_omega, forms.is_neumann
    A = forms.A
    S = A[np.ix_(om, om)]
    if nm.any():
        Aon = A[np.ix_(om, nm)]
        S = S - Aon @ np.linalg.solve(A[np.ix_(nm, nm)], Aon.T)
    S = 0.5 * (S + S.T)
    return float(sl.eigh(S, np.diag(forms.M[om]), eigvals_only=True, subset_by_index=[0, 0])[0])


@dataclass
class InequalityReport:
    name: str
    trials: int
    worst_margin: float
    failures: list = field(default_factory=list)


class _Tracker:
    def __init__(self, name):
        self.name = name
        self.margins = []
        self.failures = []

    def add(self, trial, margin, ok):
        self.margins.append(float(margin))
        if not ok:
            self.failures.append(trial)

    def report(self):
        worst = min(self.margins) if self.margins else float("nan")
        return InequalityReport(self.name, len(self.margins), worst, list(self.failures))


def _normalized(forms, x):
    e = forms.energy(x)
    return x / np.sqrt(e) if e > 0 else x


def fuzz_suite(target, seed=0, trials=100, params=None, sobolev_value=None):
    """Run every check on seeded random functions; deterministic given ``seed``.

    ``target`` is assembled forms or a configuration (then ``params`` is needed).
    Trial t draws from ``numpy.random.default_rng([seed, t])``; failures list
    these trial indices.
    """
    if trials <= 0:
        return []
    forms = target if isinstance(target, NonlocalForms) else assemble(target, params)
    lam = smallest_hardy_eigen(forms, tol=1e-13).lambda_h
    c_poinc = poincare_constant(forms)
    if sobolev_value is None:
        from .semilinear import sobolev_constant

        sobolev_value = sobolev_constant(forms, restarts=4, seed=seed).value
    names = ["picone", "picone_remainder", "picone_equality", "green", "hardy", "poincare",
             "sobolev", "regional"]
    track = {k: _Tracker(k) for k in names}
    om = forms.is_omega
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        u = _normalized(forms, np.exp(rng.standard_normal(forms.size)))
        v = _normalized(forms, rng.standard_normal(forms.size))
        pc = picone_check(u, v, forms)
        scale = max(1.0, abs(pc.rhs), abs(pc.lhs))
        track["picone"].add(t, pc.margin, pc.margin >= -QUOTIENT_SLACK)
        gap = abs(pc.margin - pc.remainder)
        track["picone_remainder"].add(t, -gap, gap <= IDENTITY_TOL * scale)
        c = (1.0, 3.0, -2.0)[t % 3]
        eq = picone_check(u, c * u, forms).margin
        track["picone_equality"].add(t, -abs(eq), abs(eq) <= IDENTITY_TOL * max(1.0, c * c))
        res = green_identity_check(u, v, forms)
        track["green"].add(t, -res, res < IDENTITY_TOL)
        w = v.copy()
        if forms.hardy(w) > 0:
            m = hardy_quotient(w, forms) - lam
            track["hardy"].add(t, m, m >= -QUOTIENT_SLACK)
        m = poincare_quotient(w, forms) - c_poinc
        track["poincare"].add(t, m, m >= -QUOTIENT_SLACK)
        m = sobolev_quotient(w, forms) - sobolev_value
        track["sobolev"].add(t, m, m >= -QUOTIENT_SLACK)
        ws = np.where(om, w, 0.0)
        m = forms.energy(ws) - regional_energy(ws, forms)
        track["regional"].add(t, m, m >= -QUOTIENT_SLACK)
    return [track[k].report() for k in names]
