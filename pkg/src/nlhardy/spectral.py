"""Smallest eigenpair of the Hardy pencil (A, H) and related experiments."""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl

from .assembly import assemble
from .errors import ConvergenceError, DegenerateConfigError, ParameterError
from .geometry import OMEGA, shrinking_family


@dataclass
class SpectralResult:
    lambda_h: float
    eigvec: np.ndarray        # DOF values, nonnegative-mean on Omega, max-norm 1
    residual: float
    iterations: int
    gap: float = None
    degenerate: bool = False
    history: list = field(default_factory=list)


def normalize_sign(u, is_omega):
    u = np.asarray(u, dtype=float).copy()
    mean = u[is_omega].mean()
    if mean < 0 or (mean == 0 and u[np.argmax(np.abs(u))] < 0):
        u = -u
    return u / np.max(np.abs(u))


def _residual(forms, u, lam):
    return float(np.linalg.norm(forms.A @ u - lam * forms.H * u) / np.linalg.norm(u))


def _degenerate_result(forms):
    u = np.ones(forms.size)
    return SpectralResult(lambda_h=0.0, eigvec=u, residual=_residual(forms, u, 0.0),
                          iterations=0, degenerate=True)


def is_degenerate(forms):
    """True when the form has no Dirichlet coupling at all (constants are free)."""
    return not np.any(forms.ground > 0.0)


def smallest_hardy_eigen(forms, tol=1e-10, max_iter=500):
    """Inverse iteration u <- A^{-1} H u for the smallest pencil eigenvalue."""
    if not np.any(forms.H > 0):
        raise ParameterError("Hardy mass vanishes identically (no Omega cells)")
    if is_degenerate(forms):
        raise DegenerateConfigError(
            "no Dirichlet cells and truncated far field: A is singular, constants give lambda = 0",
            _degenerate_result(forms))
    try:
        factor = sl.cho_factor(forms.A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DegenerateConfigError("stiffness matrix is not positive definite",
                                    _degenerate_result(forms)) from exc
    H = forms.H
    u = np.where(forms.is_omega, 1.0, 0.0)
    u /= math.sqrt(forms.hardy(u))
    lam = forms.energy(u)
    history = [lam]
    for it in range(1, max_iter + 1):
        v = sl.cho_solve(factor, H * u)
        v /= math.sqrt(forms.hardy(v))
        new = forms.energy(v)
        history.append(new)
        u = v
        done = abs(new - lam) < tol * new
        lam = new
        if done:
            res = _residual(forms, u, lam)
            if res <= math.sqrt(tol) * max(np.linalg.norm(forms.A @ u) / np.linalg.norm(u), 1.0):
                return SpectralResult(lambda_h=lam, eigvec=normalize_sign(u, forms.is_omega),
                                      residual=res, iterations=it, history=history)
    raise ConvergenceError(f"inverse iteration did not converge in {max_iter} steps",
                           last=SpectralResult(lam, normalize_sign(u, forms.is_omega),
                                               _residual(forms, u, lam), max_iter,
                                               history=history))


def _schur(forms):
    om, nm = forms.is_omega, forms.is_neumann
    A = forms.A
    S = A[np.ix_(om, om)]
    if nm.any():
        Aon = A[np.ix_(om, nm)]
        Ann = A[np.ix_(nm, nm)]
        S = S - Aon @ np.linalg.solve(Ann, Aon.T)
        S = 0.5 * (S + S.T)
    return S


def dense_hardy_eigen(forms, count=2):
    """Smallest ``count`` pencil eigenpairs via the Schur complement on Omega.

    Returns eigenvalues and DOF eigenvectors (N values recovered harmonically).
    """
    if is_degenerate(forms):
        raise DegenerateConfigError("singular stiffness matrix", _degenerate_result(forms))
    om, nm = forms.is_omega, forms.is_neumann
    S = _schur(forms)
    vals, vecs = sl.eigh(S, np.diag(forms.H[om]), subset_by_index=[0, count - 1])
    full = np.zeros((forms.size, count))
    full[om] = vecs
    if nm.any():
        A = forms.A
        full[nm] = -np.linalg.solve(A[np.ix_(nm, nm)], A[np.ix_(nm, om)] @ vecs)
    return vals, full


def spectral_gap(forms):
    """(lambda_1, lambda_2) of the pencil; warns when they are numerically equal."""
    vals, vecs = dense_hardy_eigen(forms, 2)
    l1, l2 = float(vals[0]), float(vals[1])
    if l2 - l1 < 1e-10 * l1:
        warnings.warn("lambda_1 appears to be multiple (gap below 1e-10 lambda_1)")
    u = normalize_sign(vecs[:, 0], forms.is_omega)
    if np.any(u[forms.is_omega] < -1e-12):
        warnings.warn("first eigenvector changes sign on Omega")
    return l1, l2


@dataclass
class ShrinkStep:
    k: int
    n_dirichlet: int
    lambda_h: float
    residual: float
    iterations: int


def shrinking_dirichlet_experiment(grid, base_config, k_max, params, tol=1e-10,
                                   max_iter=500):
    """lambda_k for the family keeping ceil(|D|/2^k) Dirichlet cells, k = 0..k_max."""
    if k_max < 0:
        raise ParameterError("k_max must be >= 0")
    out = []
    for k in range(k_max + 1):
        cfg = shrinking_family(grid, base_config, k)
        res = smallest_hardy_eigen(assemble(cfg, params), tol, max_iter)
        out.append(ShrinkStep(k, cfg.count(1), res.lambda_h, res.residual, res.iterations))
    return out


@dataclass
class ExponentFit:
    alpha_hat: float
    r_squared: float
    samples: int


def singularity_exponent_fit(values, config, window):
    """Slope of log|u| against log|x| on Omega centers inside ``window``, negated.

    ``values`` holds one entry per cell; the fitted exponent describes
    u ~ |x|^{-alpha_hat} near the origin.
    """
    r_min, r_max = window
    values = np.asarray(values, dtype=float)
    if values.shape != (config.size,):
        raise ParameterError("one value per cell expected")
    r = np.linalg.norm(config.centers, axis=1)
    sel = (config.labels == OMEGA) & (r >= r_min) & (r <= r_max) & (values != 0.0)
    sel[config.origin_index] = False
    if np.count_nonzero(sel) < 6:
        raise ParameterError(f"window {window} holds fewer than 6 Omega cells")
    x = np.log(r[sel])
    y = np.log(np.abs(values[sel]))
    slope, icept = np.polyfit(x, y, 1)
    pred = slope * x + icept
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return ExponentFit(alpha_hat=float(-slope), r_squared=r2, samples=int(sel.sum()))
