"""Discrete quadratic forms on a labeled grid.

The energy of a grid function u (zero on Dirichlet cells) is

    u'Au = sum_{i<j} C_ij (u_i - u_j)^2 + sum_i g_i u_i^2,

where C_ij = a_{d,s} W_ij over pairs with at least one Omega cell (the
discrete D_Omega), and g_i collects the pairs of i with Dirichlet cells and,
for a Dirichlet far field, with everything outside the box.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ParameterError
from .geometry import DIRICHLET, NEUMANN, OMEGA, FarField, check
from .kernel import _cell_gauss, box_exterior_integral, gauss_nodes, unit_weight_table

_HARDY_ANGULAR = 64
_REG_POINTS = 32


@dataclass(frozen=True, eq=False)
class NonlocalForms:
    """Dense forms over the degrees of freedom (Omega and N cells)."""

    config: object
    params: object
    dofs: np.ndarray          # cell indices of the DOFs, increasing
    is_omega: np.ndarray      # bool per DOF
    C: np.ndarray             # pair conductances among DOFs, zero diagonal
    ground: np.ndarray        # per-DOF coupling to Dirichlet cells / far field
    A: np.ndarray
    H: np.ndarray             # diagonal of the Hardy mass (0 on N)
    M: np.ndarray             # diagonal plain mass h^d
    tail_included: bool

    @property
    def size(self):
        return len(self.dofs)

    @property
    def is_neumann(self):
        return ~self.is_omega

    @property
    def h(self):
        return self.config.h

    def energy(self, u):
        u = np.asarray(u, dtype=float)
        return float(u @ self.A @ u)

    def hardy(self, u):
        u = np.asarray(u, dtype=float)
        return float(np.sum(self.H * u * u))

    def hardy_reg(self, reg_n):
        """Diagonal of H_n (weight 1/(|x|^{2s} + 1/n)); ``None`` or inf gives H."""
        if reg_n is None or math.isinf(reg_n):
            return self.H
        vals = regularized_hardy_diagonal(self.config, self.params, reg_n)[self.dofs]
        return np.where(self.is_omega, vals, 0.0)

    def full(self, u):
        """Expand DOF values to one value per cell (zeros on D)."""
        out = np.zeros(self.config.size)
        out[self.dofs] = u
        return out

    def restrict(self, cell_values):
        return np.asarray(cell_values, dtype=float)[self.dofs]


@dataclass
class GridFunction:
    """DOF values of a function vanishing on the Dirichlet cells."""

    forms: NonlocalForms
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.forms.size,):
            raise ParameterError("one value per non-Dirichlet cell expected")

    def cells(self):
        return self.forms.full(self.values)


# ------------------------------------------------------------ cell integrals

def _signed_corner(x, y, s, npts=_HARDY_ANGULAR):
    """sign(x) sign(y) * int_0^|x| int_0^|y| |z|^{-2s} dz."""
    X, Y = abs(x), abs(y)
    if X == 0.0 or Y == 0.0:
        return 0.0
    e = 2.0 - 2.0 * s
    split = math.atan2(Y, X)
    t1, w1 = gauss_nodes(npts, 0.0, split)
    t2, w2 = gauss_nodes(npts, split, 0.5 * math.pi)
    val = (np.sum(w1 * (X / np.cos(t1)) ** e) + np.sum(w2 * (Y / np.sin(t2)) ** e)) / e
    return math.copysign(1.0, x) * math.copysign(1.0, y) * float(val)


def hardy_cell_integral(cell, params):
    """int_cell |x|^{-2s} dx for one cell given as (lo, hi)."""
    lo, hi = (np.atleast_1d(np.asarray(c, dtype=float)) for c in cell)
    s = params.s
    if lo.shape[0] == 1:
        e = 1.0 - 2.0 * s

        def F(t):
            return math.copysign(abs(t) ** e, t) / e

        return F(hi[0]) - F(lo[0])
    return _hardy_cells_2d(lo[None, :], hi[None, :], s)[0]


def _hardy_cells_2d(lo, hi, s, g=8):
    width = np.max(hi - lo, axis=1)
    gap = np.maximum(np.maximum(lo, -hi), 0.0)
    near = np.linalg.norm(gap, axis=1) < 4.0 * width
    out = np.empty(len(lo))
    if (~near).any():
        x, w = _cell_gauss(lo[~near], hi[~near], g)
        out[~near] = np.sum(w * np.sum(x * x, axis=-1) ** (-s), axis=1)
    for i in np.flatnonzero(near):
        (a, c), (b, d) = lo[i], hi[i]
        out[i] = (_signed_corner(b, d, s) - _signed_corner(a, d, s)
                  - _signed_corner(b, c, s) + _signed_corner(a, c, s))
    return out


def hardy_diagonal(config, params):
    """int_{C_i} |x|^{-2s} for every cell."""
    lo, hi = config.cell_bounds()
    if config.d == 1:
        e = 1.0 - 2.0 * params.s

        def F(t):
            return np.sign(t) * np.abs(t) ** e / e

        return F(hi[:, 0]) - F(lo[:, 0])
    return _hardy_cells_2d(lo, hi, params.s)


def regularized_hardy_diagonal(config, params, reg_n):
    """int_{C_i} dx / (|x|^{2s} + 1/n) with positive-weight rules (monotone in n)."""
    s, d = params.s, config.d
    lo, hi = config.cell_bounds()
    x, w = _cell_gauss(lo, hi, 8)
    out = np.sum(w / (np.sum(x * x, axis=-1) ** s + 1.0 / reg_n), axis=1)
    touch = np.flatnonzero(np.all((lo <= 0.0) & (hi >= 0.0), axis=1))
    kappa = 1.0 / (d - 2.0 * s)
    tau, wt = gauss_nodes(_REG_POINTS, 0.0, 1.0)
    for i in touch:
        if d == 1:
            length = hi[i, 0] - lo[i, 0]
            r = length * tau**kappa
            jac = wt * length * kappa * tau ** (kappa - 1.0)
            out[i] = float(np.sum(jac / (r ** (2 * s) + 1.0 / reg_n)))
            continue
        h = hi[i, 0] - lo[i, 0]
        total = 0.0
        for a, b in ((0.0, 0.25 * math.pi), (0.25 * math.pi, 0.5 * math.pi)):
            th, wth = gauss_nodes(_REG_POINTS, a, b)
            rmax = h / np.maximum(np.cos(th), np.sin(th))
            r = rmax[:, None] * tau[None, :] ** kappa
            jac = rmax[:, None] * kappa * tau[None, :] ** (kappa - 1.0) * r
            total += float(np.sum(wth[:, None] * wt[None, :] * jac / (r ** (2 * s) + 1.0 / reg_n)))
        out[i] = total
    return out


# ------------------------------------------------------------ assembly

def conductance_matrix(config, params):
    """a_{d,s} W_ij for every cell pair with at least one Omega cell (zero diagonal)."""
    table = unit_weight_table(config.d, params.s, config.n, params.quad)
    scale = params.a_ds * config.h ** (config.d - 2 * params.s)
    return _kernels.conductance(config.labels, config.index_coords, table, config.n,
                                scale, int(OMEGA))


def far_field_tails(config, params):
    """a_{d,s} int_{C_i} int_{outside box} dnu for Omega cells, 0 elsewhere."""
    out = np.zeros(config.size)
    if config.far_field != FarField.DIRICHLET:
        return out
    om = config.mask(OMEGA)
    lo, hi = config.cell_bounds()
    out[om] = params.a_ds * box_exterior_integral(
        lo[om], hi[om], config.L, params.s, params.quad.gauss_points, params.quad.polar_points)
    return out


def assemble(config, params, validate=True):
    """Stiffness, Hardy mass and plain mass over the Omega and N cells."""
    if validate and not config.diagnostic:
        check(config)
    if config.d != params.d:
        raise ParameterError("grid and parameters disagree on d")
    Cfull = conductance_matrix(config, params)
    tails = far_field_tails(config, params)
    dofs = np.flatnonzero(config.dof_mask)
    dmask = config.mask(DIRICHLET)
    C = Cfull[np.ix_(dofs, dofs)]
    ground = Cfull[np.ix_(dofs, np.flatnonzero(dmask))].sum(axis=1) + tails[dofs]
    A = -C.copy()
    A[np.diag_indices_from(A)] = C.sum(axis=1) + ground
    is_omega = config.labels[dofs] == OMEGA
    H = np.where(is_omega, hardy_diagonal(config, params)[dofs], 0.0)
    M = np.full(len(dofs), config.h**config.d)
    return NonlocalForms(config=config, params=params, dofs=dofs, is_omega=is_omega, C=C,
                         ground=ground, A=A, H=H, M=M,
                         tail_included=config.far_field == FarField.DIRICHLET)


def lp_functional(u, q, forms):
    """Discrete L^q(Omega) norm (Omega cells only)."""
    if not q > 1:
        raise ParameterError("q must exceed 1")
    u = np.asarray(u, dtype=float)[forms.is_omega]
    return float(np.sum(forms.h**forms.config.d * np.abs(u) ** q) ** (1.0 / q))


def discrete_operators(forms, u):
    """Split r = A u into its Omega rows ((-Delta)^s_h u) and N rows (N_{s,h} u)."""
    r = forms.A @ np.asarray(u, dtype=float)
    return r[forms.is_omega], r[forms.is_neumann]


# ------------------------------------------------------------ matrix dump

def write_matrix(forms, path):
    """Upper triangle of A as ``i j value`` lines (17 significant digits)."""
    cfg, p = forms.config, forms.params
    iu, ju = np.triu_indices(forms.size)
    vals = forms.A[iu, ju]
    keep = vals != 0.0
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# nlhardy A {cfg.d} {p.s!r} {cfg.n} {cfg.L!r}\n")
        for i, j, v in zip(iu[keep], ju[keep], vals[keep]):
            fh.write(f"{i} {j} {v:.17g}\n")


def read_matrix(path):
    with open(path) as fh:
        header = fh.readline().split()
        rows = np.loadtxt(fh, ndmin=2)
    if header[:3] != ["#", "nlhardy", "A"]:
        raise ParameterError(f"{path}: not an nlhardy matrix dump")
    i, j = rows[:, 0].astype(int), rows[:, 1].astype(int)
    m = int(max(i.max(), j.max())) + 1
    A = np.zeros((m, m))
    A[i, j] = rows[:, 2]
    A[j, i] = rows[:, 2]
    meta = dict(d=int(header[3]), s=float(header[4]), n=int(header[5]), L=float(header[6]))
    return A, meta
