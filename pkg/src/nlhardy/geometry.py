"""Labeled Cartesian grids for Dirichlet-Neumann configurations."""
import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import ParameterError, ValidationError


class Label(enum.IntEnum):
    OMEGA = 0
    DIRICHLET = 1
    NEUMANN = 2


class FarField(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN_TRUNCATED = "neumann_truncated"


OMEGA, DIRICHLET, NEUMANN = Label.OMEGA, Label.DIRICHLET, Label.NEUMANN


@dataclass(frozen=True, eq=False)
class LabeledGrid:
    """Uniform grid on the box [-L, L]^d with one label per cell.

    Cells are stored in row-major order (first axis slowest).  With ``n`` even
    the origin is a grid vertex, so no cell center coincides with it; the
    "origin cell" is the one whose half-open extent [0, h)^d contains 0.
    """

    d: int
    L: float
    n: int
    labels: np.ndarray
    far_field: FarField = FarField.DIRICHLET
    diagnostic: bool = False
    region: object = None
    name: str = "grid"

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int8).reshape(-1)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "far_field", FarField(self.far_field))

    @property
    def h(self):
        return 2.0 * self.L / self.n

    @property
    def size(self):
        return self.n**self.d

    @property
    def index_coords(self):
        axes = np.indices((self.n,) * self.d).reshape(self.d, -1).T
        return axes.astype(np.int64)

    @property
    def centers(self):
        return (self.index_coords - self.n // 2 + 0.5) * self.h

    @property
    def origin_index(self):
        k = self.n // 2
        return int(np.ravel_multi_index((k,) * self.d, (self.n,) * self.d))

    def mask(self, label):
        return self.labels == int(label)

    def count(self, label):
        return int(np.count_nonzero(self.labels == int(label)))

    @property
    def dof_mask(self):
        return self.labels != int(DIRICHLET)

    def with_labels(self, labels, **changes):
        return replace(self, labels=np.asarray(labels, dtype=np.int8), **changes)

    def cell_bounds(self):
        # offsets from the origin vertex keep the cell faces at 0 exact
        k = self.index_coords - self.n // 2
        return k * self.h, (k + 1) * self.h


def build_grid(d, L, n, far_field=FarField.DIRICHLET):
    if d not in (1, 2):
        raise ParameterError(f"dimension d={d} not supported")
    if n < 8 or n % 2:
        raise ParameterError(f"n={n} must be even and >= 8")
    if not L > 0:
        raise ParameterError("L must be positive")
    labels = np.full(n**d, int(NEUMANN), dtype=np.int8)
    return LabeledGrid(d=d, L=float(L), n=int(n), labels=labels, far_field=far_field)


def _radii(grid):
    return np.linalg.norm(grid.centers, axis=1)


def label_ball_config(grid, r_omega, dirichlet_shell, diagnostic=False):
    """Omega = {|x| < r_omega}, D = {r1 < |x| < r2}, N = remainder."""
    r1, r2 = dirichlet_shell
    if not 0 < r_omega <= r1 <= r2 <= grid.L * math.sqrt(grid.d) + grid.h:
        raise ParameterError("need 0 < r_omega <= r1 <= r2 <= L")
    r = _radii(grid)
    labels = np.full(grid.size, int(NEUMANN), dtype=np.int8)
    labels[(r > r1) & (r < r2)] = DIRICHLET
    labels[r < r_omega] = OMEGA
    labels[grid.origin_index] = OMEGA
    cfg = grid.with_labels(labels, diagnostic=diagnostic, name="ball")
    if (not diagnostic and cfg.far_field == FarField.NEUMANN_TRUNCATED
            and cfg.count(DIRICHLET) == 0):
        raise ValidationError("empty Dirichlet set with truncated Neumann far field")
    return cfg


def full_dirichlet(grid, r_omega):
    """Every non-Omega cell is Dirichlet, and the far field is Dirichlet too."""
    r = _radii(grid)
    labels = np.full(grid.size, int(DIRICHLET), dtype=np.int8)
    labels[r < r_omega] = OMEGA
    labels[grid.origin_index] = OMEGA
    return grid.with_labels(labels, far_field=FarField.DIRICHLET, name="full_dirichlet")


def neumann_only(grid, r_omega):
    """D = empty with truncated far field: the degenerate diagnostic configuration."""
    r = _radii(grid)
    labels = np.full(grid.size, int(NEUMANN), dtype=np.int8)
    labels[r < r_omega] = OMEGA
    labels[grid.origin_index] = OMEGA
    return grid.with_labels(labels, far_field=FarField.NEUMANN_TRUNCATED,
                            diagnostic=True, name="neumann_only")


@dataclass(frozen=True)
class Example1Params:
    eps: float
    eta: float
    A_len: float
    m: float
    beta: float

    def __post_init__(self):
        if not 0 < self.eps < self.eta < self.A_len < self.beta:
            raise ValidationError("need 0 < eps < eta < A_len < beta")
        if not self.eps < self.m:
            raise ValidationError("need eps < m")
        if not self.eps < min(self.eta / 4, self.m / 4):
            raise ValidationError("need eps < min(eta/4, m/4)")


@dataclass(frozen=True)
class RadialPiece:
    """Part of Omega in polar form about the origin.

    ``axial_eps`` is None for a full shell; otherwise the piece is the thin
    cylinder {x1 >= eps, |x_perp| < eps} restricted to rho_min < |y| <= rho_max.
    """

    rho_min: float
    rho_max: float
    axial_eps: float = None

    def halfwidth(self, rho):
        """Angular half-width (about the +x1 axis) of the piece at radius rho, d = 2."""
        rho = np.asarray(rho, dtype=float)
        if self.axial_eps is None:
            return np.full_like(rho, math.pi)
        ratio = np.clip(self.axial_eps / rho, 0.0, 1.0)
        return np.minimum(np.arcsin(ratio), np.arccos(ratio))

    def directions(self):
        """Admissible unit directions for d = 1."""
        return (1.0, -1.0) if self.axial_eps is None else (1.0,)


@dataclass(frozen=True)
class Example1Region:
    """Analytic Omega = ball(eps) U cylinder U annulus with its D/N labeling."""

    params: Example1Params
    d: int = 2

    @property
    def pieces(self):
        p = self.params
        return {
            "ball": RadialPiece(0.0, p.eps),
            "cylinder": RadialPiece(p.eps, p.A_len, axial_eps=p.eps),
            "annulus": RadialPiece(p.A_len, p.beta),
        }

    def label_points(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        p = self.params
        r = np.linalg.norm(x, axis=1)
        x1 = x[:, 0]
        perp = np.linalg.norm(x[:, 1:], axis=1) if x.shape[1] > 1 else np.zeros(len(x))
        omega = ((r < p.eps)
                 | ((x1 >= p.eps) & (x1 <= p.A_len) & (perp < p.eps))
                 | ((r > p.A_len) & (r < p.beta)))
        dset = (((r > p.eps) & (r < p.eta))
                | ((x1 >= p.eta) & (x1 <= p.A_len) & (perp > p.eps) & (perp < p.m))
                | (r > p.beta))
        out = np.full(len(x), int(NEUMANN), dtype=np.int8)
        out[dset] = DIRICHLET
        out[omega] = OMEGA
        return out

    def in_neumann(self, x):
        return self.label_points(x) == NEUMANN


def _box_distance(lo, hi):
    """Euclidean distance from the origin to each axis-aligned cell."""
    gap = np.maximum(np.maximum(lo, -hi), 0.0)
    return np.linalg.norm(gap, axis=1)


def label_example1(grid, p):
    """Midpoint labeling of the Example-1 geometry.

    The ball and the thin cylinder are usually narrower than a cell, so every
    cell meeting them is marked Omega.  This keeps the discrete Omega connected;
    any remaining N cell still has its center in the analytic N.
    """
    if p.beta >= grid.L:
        raise ValidationError("Example-1 needs beta < L")
    region = Example1Region(p, d=grid.d)
    labels = region.label_points(grid.centers)
    lo, hi = grid.cell_bounds()
    hits_ball = _box_distance(lo, hi) < p.eps
    hits_cyl = (hi[:, 0] >= p.eps) & (lo[:, 0] <= p.A_len)
    if grid.d > 1:
        hits_cyl &= _box_distance(lo[:, 1:], hi[:, 1:]) < p.eps
    labels = labels.copy()
    labels[hits_ball | hits_cyl] = OMEGA
    labels[grid.origin_index] = OMEGA
    return grid.with_labels(labels, far_field=FarField.DIRICHLET, region=region,
                            name="example1")


def omega_distance(config):
    """Distance from every cell center to the nearest Omega cell center."""
    c = config.centers
    om = c[config.mask(OMEGA)]
    out = np.empty(len(c))
    for start in range(0, len(c), 512):
        blk = c[start:start + 512]
        dist = np.linalg.norm(blk[:, None, :] - om[None, :, :], axis=2)
        out[start:start + 512] = dist.min(axis=1)
    return out


def shrinking_family(grid, base, k):
    """Keep the ceil(|D|/2^k) Dirichlet cells closest to Omega, the rest become N."""
    if k < 0:
        raise ParameterError("k must be >= 0")
    d_idx = np.flatnonzero(base.mask(DIRICHLET))
    if len(d_idx) == 0:
        return base
    dist = omega_distance(base)[d_idx]
    order = d_idx[np.lexsort((d_idx, dist))]
    keep = math.ceil(len(d_idx) / 2**k)
    labels = base.labels.copy()
    labels[order[keep:]] = NEUMANN
    return base.with_labels(labels, name=f"{base.name}_k{k}")


def validate(config):
    """List of invariant violations; empty iff the configuration is valid."""
    out = []
    labels = config.labels
    if labels.size != config.n**config.d:
        out.append(f"expected {config.n**config.d} labels, got {labels.size}")
        return out
    bad = ~np.isin(labels, [int(OMEGA), int(DIRICHLET), int(NEUMANN)])
    if bad.any():
        out.append(f"{int(bad.sum())} cells carry an unknown label")
    if labels[config.origin_index] != OMEGA:
        out.append("origin cell is not labeled OMEGA")
    om = (labels == OMEGA).reshape((config.n,) * config.d)
    if om.any():
        _, ncomp = ndimage.label(om)
        if ncomp > 1:
            out.append(f"OMEGA has {ncomp} connected components")
        edge = np.zeros_like(om)
        for ax in range(config.d):
            sl = [slice(None)] * config.d
            sl[ax] = 0
            edge[tuple(sl)] = True
            sl[ax] = -1
            edge[tuple(sl)] = True
        if (om & edge).any():
            out.append("OMEGA touches the box boundary")
    else:
        out.append("OMEGA is empty")
    if (config.far_field == FarField.NEUMANN_TRUNCATED and not config.diagnostic
            and not (labels == DIRICHLET).any()):
        out.append("no Dirichlet cells with truncated far field (form is singular)")
    return out


def check(config):
    diags = validate(config)
    if diags:
        raise ValidationError("; ".join(diags), diags)
    return config


def read_label_file(grid, path):
    """``custom_labels`` geometry: one integer label per line, row-major order."""
    with open(path) as fh:
        rows = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    try:
        labels = np.array([int(r) for r in rows], dtype=np.int64)
    except ValueError as exc:
        raise ValidationError(f"non-integer label in {path}") from exc
    if labels.size != grid.size:
        raise ValidationError(f"{path}: expected {grid.size} labels, got {labels.size}")
    if not np.isin(labels, [0, 1, 2]).all():
        raise ValidationError(f"{path}: labels must be 0 (Omega), 1 (D) or 2 (N)")
    return grid.with_labels(labels, name="custom_labels")


def write_label_file(config, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# nlhardy labels d={config.d} n={config.n} L={config.L!r}\n")
        fh.writelines(f"{int(v)}\n" for v in config.labels)
