"""Quadrature for the singular kernel |x - y|^{-d-2s}.

Conventions: ``pair_weight`` and friends return the raw double integral of
the kernel (no a_{d,s}); ``tail_weight``, ``neumann_at`` and
``frac_laplacian_at`` include the normalization.
"""
import functools
import math

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from . import _kernels
from .errors import DomainError, ParameterError

TWO_PI = 2.0 * math.pi


@functools.lru_cache(maxsize=None)
def _leggauss(n):
    x, w = leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_nodes(n, a, b):
    """Gauss-Legendre nodes/weights on [a, b]; a, b may be arrays (nodes on last axis)."""
    x, w = _leggauss(n)
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


# ------------------------------------------------------------ closed forms

class RadialPower:
    """u(y) = |y|^{-exponent}; the pole sits at the origin."""

    def __init__(self, exponent):
        self.exponent = float(exponent)

    @property
    def pole(self):
        return self.exponent > 0

    def radial(self, rho):
        return np.asarray(rho, dtype=float) ** (-self.exponent)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        r = np.sqrt(np.sum(y * y, axis=-1))
        return r ** (-self.exponent)


class Constant:
    pole = False
    exponent = 0.0

    def __init__(self, value=1.0):
        self.value = float(value)

    def radial(self, rho):
        return np.full_like(np.asarray(rho, dtype=float), self.value)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return np.full(y.shape[:-1], self.value)


def hardy_profile(d, s):
    """w(y) = |y|^{-(d-2s)/2}."""
    return RadialPower((d - 2 * s) / 2)


# ------------------------------------------------------------ pair weights

def _check_pair_order(s):
    if not 0.0 < s < 0.5:
        raise ParameterError(
            f"s={s}: touching-cell weights of piecewise constants are finite only for s < 1/2")


def _tent_primitives_1d(k, s):
    t = np.asarray(k, dtype=float)
    return np.where(t > 0, np.abs(t) ** (1 - 2 * s), 0.0) / (2 * s * (1 - 2 * s))


def unit_weight_1d_exact(k, s):
    """Closed form of the double integral over [0,1] x [k, k+1], k >= 1."""
    _check_pair_order(s)
    k = np.asarray(k, dtype=float)
    H = functools.partial(_tent_primitives_1d, s=s)
    return 2.0 * H(k) - H(k + 1.0) - H(k - 1.0)


def unit_weight_1d_gauss(k, s, g=8):
    """Tent-convolution form: int tent(t - k) |t|^{-1-2s} dt, Gauss on each half."""
    k = np.asarray(k, dtype=float)
    q = 1.0 + 2.0 * s
    t1, w1 = gauss_nodes(g, k - 1.0, k)
    t2, w2 = gauss_nodes(g, k, k + 1.0)
    kk = k[..., None]
    return (np.sum(w1 * (t1 - kk + 1.0) * t1 ** (-q), axis=-1)
            + np.sum(w2 * (kk + 1.0 - t2) * t2 ** (-q), axis=-1))


def _tent_linear(comp, k, mid):
    """tent(r*comp - k) = alpha + beta*r on an interval containing ``mid``."""
    u = mid * comp[:, None] - k
    inside = np.abs(u) < 1.0
    pos = u >= 0.0
    alpha = np.where(inside, np.where(pos, 1.0 + k, 1.0 - k), 0.0)
    beta = np.where(inside, np.where(pos, -comp[:, None], comp[:, None]), 0.0)
    return alpha, beta


def _radial_tent_integral(theta, k1, k2, s):
    """int_0^inf tent(r cos - k1) tent(r sin - k2) r^{-1-2s} dr, exactly, per angle."""
    c, sn = np.cos(theta), np.sin(theta)
    breaks = [np.zeros_like(theta)]
    with np.errstate(divide="ignore", invalid="ignore"):
        for comp, k in ((c, k1), (sn, k2)):
            for j in (-1.0, 0.0, 1.0):
                r = (k + j) / comp
                breaks.append(np.where(np.isfinite(r) & (r > 0), r, 0.0))
    B = np.sort(np.stack(breaks, axis=1), axis=1)
    ra, rb = B[:, :-1], B[:, 1:]
    mid = 0.5 * (ra + rb)
    a1, b1 = _tent_linear(c, k1, mid)
    a2, b2 = _tent_linear(sn, k2, mid)
    c0, c1, c2 = a1 * a2, a1 * b2 + a2 * b1, b1 * b2
    live = rb > ra
    e = 2.0 * s
    with np.errstate(divide="ignore", invalid="ignore"):
        f0 = np.where(live & (ra > 0), (rb ** -e - ra ** -e) / -e, 0.0)
        f1 = np.where(live, (rb ** (1 - e) - ra ** (1 - e)) / (1 - e), 0.0)
        f2 = np.where(live, (rb ** (2 - e) - ra ** (2 - e)) / (2 - e), 0.0)
    return np.sum(c0 * f0 + c1 * f1 + c2 * f2, axis=1)


def unit_weight_2d_polar(k1, k2, s, npts=24):
    """Unit-square pair weight at integer offset (k1, k2) by the exact radial route.

    The double integral equals the kernel integrated against the product of
    two tent functions; in polar coordinates the radial part is a piecewise
    quadratic times r^{-1-2s} (closed form) and the angular part is smooth
    between the directions of the 3x3 lattice points, where Gauss is used.
    """
    _check_pair_order(s)
    k1, k2 = float(k1), float(k2)
    angs = {0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi}
    for a in (-1.0, 0.0, 1.0):
        for b in (-1.0, 0.0, 1.0):
            x, y = k1 + a, k2 + b
            if x != 0.0 or y != 0.0:
                angs.add(math.atan2(y, x) % TWO_PI)
    angs = sorted(angs)
    angs.append(angs[0] + TWO_PI)
    lo = np.array(angs[:-1])
    hi = np.array(angs[1:])
    keep = hi - lo > 1e-15
    th, wt = gauss_nodes(npts, lo[keep], hi[keep])
    vals = _radial_tent_integral(th.reshape(-1), k1, k2, s).reshape(th.shape)
    return float(np.sum(wt * vals))


def unit_weight_2d_gauss(K, s, g=8):
    """Tensor Gauss on the four quadrants of the tent support; for separated offsets."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    q = 2.0 + 2.0 * s
    total = np.zeros(len(K))
    for lo1 in (-1.0, 0.0):
        t1, w1 = gauss_nodes(g, K[:, 0] + lo1, K[:, 0] + lo1 + 1.0)
        tent1 = 1.0 - np.abs(t1 - K[:, :1])
        for lo2 in (-1.0, 0.0):
            t2, w2 = gauss_nodes(g, K[:, 1] + lo2, K[:, 1] + lo2 + 1.0)
            tent2 = 1.0 - np.abs(t2 - K[:, 1:2])
            r2 = t1[:, :, None] ** 2 + t2[:, None, :] ** 2
            f = (w1 * tent1)[:, :, None] * (w2 * tent2)[:, None, :] * r2 ** (-0.5 * q)
            total += f.sum(axis=(1, 2))
    return total


def unit_weight_table(d, s, n, quad):
    """Pair weights for unit cells at every offset |k| < n (flattened, row-major).

    Entry 0 (self pair) is 0; it never enters the energy.
    """
    _check_pair_order(s)
    near = quad.near_threshold
    if d == 1:
        k = np.arange(n, dtype=float)
        tab = np.zeros(n)
        kk = k[1:]
        tab[1:] = np.where(kk <= near, unit_weight_1d_exact(kk, s),
                           unit_weight_1d_gauss(kk, s, quad.gauss_points))
        return tab
    tab = np.zeros((n, n))
    i1, i2 = np.triu_indices(n)            # k1 <= k2 by symmetry
    K = np.stack([i1, i2], axis=1).astype(float)
    dist = np.hypot(K[:, 0], K[:, 1])
    far = dist > near
    vals = np.zeros(len(K))
    vals[far] = unit_weight_2d_gauss(K[far], s, quad.gauss_points)
    for idx in np.flatnonzero(~far & (dist > 0)):
        vals[idx] = unit_weight_2d_polar(K[idx, 0], K[idx, 1], s, quad.polar_points)
    tab[i1, i2] = vals
    tab[i2, i1] = vals
    return tab.reshape(-1)


def pair_weight(config, i, j, params):
    """Raw integral of |x - y|^{-d-2s} over cell i times cell j."""
    if i == j:
        raise ParameterError("pair_weight needs two distinct cells")
    d, s = params.d, params.s
    coords = config.index_coords
    off = np.abs(coords[i] - coords[j]).astype(float)
    if d == 1:
        k = off[0]
        if k <= params.quad.near_threshold:
            w = float(unit_weight_1d_exact(k, s))
        else:
            w = float(unit_weight_1d_gauss(k, s, params.quad.gauss_points))
    else:
        k1, k2 = sorted(off)
        if math.hypot(k1, k2) <= params.quad.near_threshold:
            w = unit_weight_2d_polar(k1, k2, s, params.quad.polar_points)
        else:
            w = float(unit_weight_2d_gauss([[k1, k2]], s, params.quad.gauss_points)[0])
    return config.h ** (d - 2 * s) * w


# ------------------------------------------------------------ tails

def _cell_gauss(lo, hi, g):
    """Tensor Gauss nodes (cells, g^d, d) and weights (cells, g^d)."""
    d = lo.shape[1]
    t, w = gauss_nodes(g, lo, hi)                  # (cells, d, g)
    if d == 1:
        return t[:, 0, :, None], w[:, 0, :]
    x = np.stack(np.broadcast_arrays(t[:, 0, :, None], t[:, 1, None, :]), axis=-1)
    return x.reshape(len(lo), g * g, 2), (w[:, 0, :, None] * w[:, 1, None, :]).reshape(len(lo), -1)


def _exterior_angular(x, s, rho_fn, breaks_fn, npts):
    """(1/2s) * int_{S^1} rho(x, e)^{-2s} de for points x (P, 2)."""
    brk = breaks_fn(x)                              # (P, nb) sorted, spanning 2pi
    lo, hi = brk[:, :-1], brk[:, 1:]
    th, wt = gauss_nodes(npts, lo, hi)              # (P, nb-1, npts)
    e = np.stack([np.cos(th), np.sin(th)], axis=-1)
    rho = rho_fn(x[:, None, None, :], e)
    return np.sum(wt * rho ** (-2 * s), axis=(1, 2)) / (2 * s)


def _box_rho(x, e, L):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (np.sign(e) * L - x) / e
    t = np.where(np.isfinite(t) & (t >= 0), t, np.inf)
    return t.min(axis=-1)


def box_exterior_integral(lo, hi, L, s, g=8, npts=24):
    """Raw int_{cell} int_{y outside [-L, L]^d} |x - y|^{-d-2s} dy dx, per cell."""
    lo = np.atleast_2d(lo).astype(float)
    hi = np.atleast_2d(hi).astype(float)
    d = lo.shape[1]
    if d == 1:
        e1 = 1 - 2 * s
        a, b = lo[:, 0], hi[:, 0]
        right = ((L - a) ** e1 - (L - b) ** e1) / e1
        left = ((L + b) ** e1 - (L + a) ** e1) / e1
        return (right + left) / (2 * s)
    x, w = _cell_gauss(lo, hi, g)
    pts = x.reshape(-1, 2)

    def breaks(p):
        corners = np.array([[L, L], [-L, L], [-L, -L], [L, -L]])
        ang = np.arctan2(corners[None, :, 1] - p[:, 1:2], corners[None, :, 0] - p[:, 0:1])
        ang = np.sort(np.mod(ang, TWO_PI), axis=1)
        return np.concatenate([ang, ang[:, :1] + TWO_PI], axis=1)

    inner = _exterior_angular(pts, s, lambda xx, e: _box_rho(xx, e, L), breaks, npts)
    return np.sum(w * inner.reshape(w.shape), axis=1)


def tail_weight(cell, R_box, params):
    """a_{d,s} * int_{cell} int_{|y| > R_box} |x - y|^{-d-2s} dy dx.

    ``cell`` is a (lo, hi) pair of coordinate arrays.
    """
    lo, hi = (np.atleast_1d(np.asarray(c, dtype=float)) for c in cell)
    d, s = params.d, params.s
    if np.max(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi)))) > R_box:
        raise ParameterError("cell must lie inside the ball of radius R_box")
    if d == 1:
        e1 = 1 - 2 * s
        a, b = lo[0], hi[0]
        right = ((R_box - a) ** e1 - (R_box - b) ** e1) / e1
        left = ((R_box + b) ** e1 - (R_box + a) ** e1) / e1
        return params.a_ds * (right + left) / (2 * s)
    x, w = _cell_gauss(lo[None, :], hi[None, :], params.quad.gauss_points)
    pts = x.reshape(-1, 2)

    def rho(xx, e):
        xe = np.sum(xx * e, axis=-1)
        return -xe + np.sqrt(xe * xe + R_box**2 - np.sum(xx * xx, axis=-1))

    def breaks(p):
        return np.tile(np.linspace(0.0, TWO_PI, 5), (len(p), 1))

    inner = _exterior_angular(pts, s, rho, breaks, params.quad.polar_points)
    return params.a_ds * float(np.sum(w * inner.reshape(w.shape)))


# ------------------------------------------------------------ angular kernel

def angular_kernel(sigma, params, npts=None):
    """K(sigma) = int_{|y'|=1} |e - sigma y'|^{-(d+2s)} dH^{d-1}(y')."""
    d, s = params.d, params.s
    sigma = float(sigma)
    if sigma < 0:
        raise ParameterError("sigma must be >= 0")
    if sigma == 1.0:
        raise DomainError("K(sigma) is singular at sigma = 1")
    q = d + 2 * s
    if d == 1:
        return abs(1.0 - sigma) ** (-q) + (1.0 + sigma) ** (-q)
    npts = npts or params.quad.angular_points
    pref = 2.0 * math.pi ** ((d - 1) / 2) / math.gamma((d - 1) / 2)
    width = abs(1.0 - sigma) / math.sqrt(max(sigma, 1e-300))
    if width < 0.1:
        # integrand peaks at theta = 0 with width |1 - sigma|; cluster nodes there
        tmax = math.asinh(math.pi / width)
        t, w = gauss_nodes(npts, 0.0, tmax)
        theta = width * np.sinh(t)
        jac = w * width * np.cosh(t)
    else:
        theta, jac = gauss_nodes(npts, 0.0, math.pi)
    base = (1.0 - sigma) ** 2 + 2.0 * sigma * (1.0 - np.cos(theta))
    vals = np.sin(theta) ** (d - 2) * base ** (-q / 2)
    return pref * float(np.sum(jac * vals))


def radial_neumann(u, r, rho_a, rho_b, params):
    """int_{rho_a < |y| < rho_b} (u(x) - u(y)) |x - y|^{-d-2s} dy for radial u, |x| = r.

    Reduced to one dimension with K(sigma); no a_{d,s}.  This is the route used
    for the ball and annulus pieces of Example 1.
    """
    d, s = params.d, params.s
    ux = float(u.radial(r))

    def f(rho):
        if rho <= 0.0:
            return 0.0
        return (ux - float(u.radial(rho))) * rho ** (d - 1) * angular_kernel(rho / r, params)

    if rho_a < r < rho_b:
        raise DomainError("x lies inside the radial shell")
    val, _ = integrate.quad(f, rho_a, rho_b, limit=400, epsabs=0.0, epsrel=1e-11)
    return val * r ** (-d - 2 * s)


# ------------------------------------------------------------ point-to-cell integrals

def point_cell_integral(x, lo, hi, s, g=8, npts=24, near=4.0):
    """Raw int_{cell} |x - y|^{-d-2s} dy for one point x outside every cell."""
    x = np.asarray(x, dtype=float)
    lo = np.atleast_2d(lo).astype(float)
    hi = np.atleast_2d(hi).astype(float)
    d = lo.shape[1]
    if d == 1:
        a, b = lo[:, 0], hi[:, 0]
        x0 = x[0]
        right = (np.abs(a - x0) ** (-2 * s) - np.abs(b - x0) ** (-2 * s)) / (2 * s)
        return np.where(a >= x0, right, -right)
    h = np.max(hi - lo, axis=1)
    centre = 0.5 * (lo + hi)
    dist = np.linalg.norm(centre - x, axis=1)
    out = np.empty(len(lo))
    far = dist > near * h
    if far.any():
        nodes, w = _cell_gauss(lo[far], hi[far], g)
        diff = nodes - x
        out[far] = np.sum(w * np.sum(diff * diff, axis=-1) ** (-1.0 - s), axis=1)
    idx = np.flatnonzero(~far)
    if len(idx):
        out[idx] = _polar_point_cell(x, lo[idx], hi[idx], s, npts)
    return out


def _polar_point_cell(x, lo, hi, s, npts):
    corners = np.stack([np.stack([lo[:, 0], lo[:, 1]], 1), np.stack([hi[:, 0], lo[:, 1]], 1),
                        np.stack([hi[:, 0], hi[:, 1]], 1), np.stack([lo[:, 0], hi[:, 1]], 1)], 1)
    cen = 0.5 * (lo + hi) - x
    th0 = np.arctan2(cen[:, 1], cen[:, 0])
    rel = corners - x
    ang = np.arctan2(rel[..., 1], rel[..., 0]) - th0[:, None]
    ang = np.sort((ang + math.pi) % TWO_PI - math.pi, axis=1) + th0[:, None]
    th, wt = gauss_nodes(npts, ang[:, :-1], ang[:, 1:])          # (C, 3, npts)
    e = np.stack([np.cos(th), np.sin(th)], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo[:, None, None, :] - x) / e
        t2 = (hi[:, None, None, :] - x) / e
    tin = np.max(np.minimum(t1, t2), axis=-1)
    tout = np.min(np.maximum(t1, t2), axis=-1)
    tin = np.maximum(tin, 0.0)
    ok = tout > tin
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(ok, (tin ** (-2 * s) - tout ** (-2 * s)) / (2 * s), 0.0)
    return np.sum(wt * vals, axis=(1, 2))


def _pole_cell_nodes(lo, hi, exponent, npts):
    """Nodes/weights for int_{cell} f(y) dy where f ~ |y|^{-exponent} at a cell corner = 0."""
    d = lo.shape[0]
    kappa = 1.0 / (d - exponent)
    if d == 1:
        sign = 1.0 if hi[0] > 0 else -1.0
        length = hi[0] - lo[0]
        tau, wt = gauss_nodes(npts, 0.0, 1.0)
        rho = length * tau**kappa
        jac = length * kappa * tau ** (kappa - 1.0)
        return (sign * rho)[:, None], wt * jac
    sx = 1.0 if hi[0] > 0 else -1.0
    sy = 1.0 if hi[1] > 0 else -1.0
    h = hi[0] - lo[0]
    nodes, weights = [], []
    for a, b in ((0.0, 0.25 * math.pi), (0.25 * math.pi, 0.5 * math.pi)):
        th, wth = gauss_nodes(npts, a, b)
        rmax = h / np.maximum(np.cos(th), np.sin(th))
        tau, wtau = gauss_nodes(npts, 0.0, 1.0)
        rho = rmax[:, None] * tau[None, :] ** kappa
        jac = rmax[:, None] * kappa * tau[None, :] ** (kappa - 1.0) * rho
        pts = np.stack([sx * rho * np.cos(th)[:, None], sy * rho * np.sin(th)[:, None]], -1)
        nodes.append(pts.reshape(-1, 2))
        weights.append((wth[:, None] * wtau[None, :] * jac).reshape(-1))
    return np.concatenate(nodes), np.concatenate(weights)


def _touches_origin(lo, hi):
    return np.all((lo <= 0.0) & (hi >= 0.0), axis=1)


# ------------------------------------------------------------ Neumann operator

def neumann_many(u, xs, config, params, analytic=None, with_error=False):
    """N_s u at each point of ``xs`` (P, d); see :func:`neumann_at`."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    region = getattr(config, "region", None) if analytic is not False else None
    if analytic and region is None:
        raise ParameterError("analytic evaluation needs a configuration with a region")
    if callable(u) and region is not None:
        vals, errs = [], []
        for x in xs:
            v, e = region_neumann(u, x, region, params)
            vals.append(v)
            errs.append(e)
        vals, errs = np.array(vals), np.array(errs)
    else:
        vals = _grid_neumann(u, xs, config, params)
        errs = _GRID_REL_ERR * np.abs(vals)
    return (vals, errs) if with_error else vals


_GRID_REL_ERR = 1e-4


def neumann_at(u, x, config, params, analytic=None, with_error=False):
    """Nonlocal Neumann operator a_{d,s} int_Omega (u(x) - u(y)) |x - y|^{-d-2s} dy.

    ``u`` is either a closed-form callable (``RadialPower``, ``Constant`` or any
    vectorized function of points) or an array of per-cell values (length
    n^d, Dirichlet cells 0).  With a closed-form ``u`` and a configuration that
    carries an analytic region (Example 1), Omega is the exact region;
    otherwise it is the union of the Omega cells.
    """
    out = neumann_many(u, [x], config, params, analytic=analytic, with_error=with_error)
    if with_error:
        return float(out[0][0]), float(out[1][0])
    return float(out[0])


def _grid_neumann(u, xs, config, params):
    from .geometry import OMEGA

    d, s = params.d, params.s
    q = params.quad
    lo_all, hi_all = config.cell_bounds()
    om = config.mask(OMEGA)
    lo, hi = lo_all[om], hi_all[om]
    h = config.h
    cell_of = np.clip(np.floor((xs + config.L) / h).astype(int), 0, config.n - 1)
    flat = np.ravel_multi_index(tuple(cell_of.T), (config.n,) * d)
    if np.any(om[flat]):
        raise DomainError("Neumann operator evaluated at a point of Omega")

    closed = callable(u)
    if closed:
        ux = np.asarray(u(xs), dtype=float)
        pole = getattr(u, "pole", False)
    else:
        cell_vals = np.asarray(u, dtype=float)
        if cell_vals.shape != (config.size,):
            raise ParameterError("grid function must hold one value per cell")
        ux = cell_vals[flat]
        uj = cell_vals[om]
        pole = False

    g = q.gauss_points
    nodes, wts = _cell_gauss(lo, hi, g)               # (C, g^d, d)
    flat_nodes = nodes.reshape(-1, d)
    flat_w = wts.reshape(-1)
    expo = d + 2 * s
    if closed:
        uw = flat_w * np.asarray(u(flat_nodes), dtype=float)
        if pole:
            tp = _touches_origin(lo, hi)
            mask = np.repeat(~tp, g**d)
            uw = np.where(mask, uw, 0.0)
        mass = _kernels.kernel_sum(xs, flat_nodes, flat_w, expo)
        load = _kernels.kernel_sum(xs, flat_nodes, uw, expo)
    else:
        mass = _kernels.kernel_sum(xs, flat_nodes, flat_w, expo)
        load = _kernels.kernel_sum(xs, flat_nodes, flat_w * np.repeat(uj, g**d), expo)

    centres = 0.5 * (lo + hi)
    sub = q.subdivision
    pole_cells = np.flatnonzero(_touches_origin(lo, hi)) if pole else np.array([], dtype=int)
    for p, x in enumerate(xs):
        dist = np.linalg.norm(centres - x, axis=1)
        near = np.flatnonzero(dist <= q.near_threshold * h)
        if len(near):
            # replace the coarse Gauss value of near cells by accurate ones
            coarse_mass = np.sum(wts[near] * np.sum((nodes[near] - x) ** 2, -1) ** (-0.5 * expo), 1)
            exact_mass = point_cell_integral(x, lo[near], hi[near], s, g, q.polar_points, 0.0)
            mass[p] += np.sum(exact_mass - coarse_mass)
        if closed:
            # pole cells are absent from the coarse load; always use the graded rule
            fix = np.union1d(near, pole_cells)
            if len(fix) == 0:
                continue
            cw = wts[fix] * np.asarray(u(nodes[fix]), dtype=float)
            if pole:
                cw[_touches_origin(lo[fix], hi[fix])] = 0.0
            coarse_load = np.sum(cw * np.sum((nodes[fix] - x) ** 2, -1) ** (-0.5 * expo), 1)
            fine = np.array([_fine_cell_load(u, x, lo[c], hi[c], s, g, sub, pole, q.polar_points)
                             for c in fix])
            load[p] += np.sum(fine - coarse_load)
        elif len(near):
            load[p] += np.sum((exact_mass - coarse_mass) * uj[near])
    return params.a_ds * (ux * mass - load)


def _fine_cell_load(u, x, lo, hi, s, g, sub, pole, npts):
    d = lo.shape[0]
    expo = d + 2 * s
    if pole and np.all((lo <= 0) & (hi >= 0)):
        nodes, w = _pole_cell_nodes(lo, hi, u.exponent, 2 * npts)
        r2 = np.sum((nodes - x) ** 2, axis=-1)
        return float(np.sum(w * u(nodes) * r2 ** (-0.5 * expo)))
    edges = [np.linspace(lo[k], hi[k], sub + 1) for k in range(d)]
    grids = np.meshgrid(*[np.arange(sub)] * d, indexing="ij")
    ids = np.stack([gk.reshape(-1) for gk in grids], 1)
    slo = np.stack([edges[k][ids[:, k]] for k in range(d)], 1)
    shi = np.stack([edges[k][ids[:, k] + 1] for k in range(d)], 1)
    nodes, w = _cell_gauss(slo, shi, g)
    r2 = np.sum((nodes - x) ** 2, axis=-1)
    return float(np.sum(w * u(nodes) * r2 ** (-0.5 * expo)))


# ------------------------------------------------------------ analytic regions

def _log_map(p, q, delta, at_start, npts):
    """Nodes on [p, q] clustered toward one endpoint with length scale delta."""
    delta = max(delta, 1e-14 * max(abs(q), 1.0))
    tmax = math.log1p((q - p) / delta)
    t, w = gauss_nodes(npts, 0.0, tmax)
    step = delta * np.expm1(t)
    jac = delta * np.exp(t) * w
    return (p + step, jac) if at_start else (q - step, jac)


def _power_map(q, kappa, npts):
    tau, w = gauss_nodes(npts, 0.0, 1.0)
    return q * tau**kappa, w * q * kappa * tau ** (kappa - 1.0)


def _radial_rule(piece, r, npts, pole_kappa=None):
    """Radial nodes/weights for a piece, clustered toward |x| = r and the origin."""
    p, q = piece.rho_min, piece.rho_max
    segs = [(p, q)]
    if p < r < q:
        segs = [(p, r), (r, q)]
    rho, w = [], []
    for a, b in segs:
        if a == 0.0 and pole_kappa is not None:
            x, wx = _power_map(b, pole_kappa, npts)
        elif r <= a:
            x, wx = _log_map(a, b, a - r, True, npts)
        elif r >= b:
            x, wx = _log_map(a, b, r - b, False, npts)
        else:  # pragma: no cover - segments are split at r
            x, wx = gauss_nodes(npts, a, b)
        rho.append(x)
        w.append(wx)
    return np.concatenate(rho), np.concatenate(w)


def _piece_integral(u, x, piece, s, npts, part):
    """int_piece f(y) |x - y|^{-d-2s} dy with f = u(y) ('load') or 1 ('mass')."""
    d = x.shape[0]
    r = float(np.linalg.norm(x))
    expo = d + 2 * s
    pole = part == "load" and getattr(u, "pole", False) and piece.rho_min == 0.0
    kappa = 1.0 / (d - u.exponent) if pole else (1.0 / d if piece.rho_min == 0.0 else None)
    rho, wr = _radial_rule(piece, r, npts, kappa)
    if d == 1:
        total = 0.0
        for sgn in piece.directions():
            y = sgn * rho
            f = u(y[:, None]) if part == "load" else 1.0
            total += float(np.sum(wr * f * np.abs(x[0] - y) ** (-expo)))
        return total
    phx = math.atan2(x[1], x[0])
    hw = piece.halfwidth(rho)
    full = hw >= math.pi
    # angular window per radial node, with nodes clustered toward the admissible
    # direction closest to x
    centre = np.where(full, phx, np.clip(phx, -hw, hw))
    lo = np.where(full, phx - math.pi, -hw)
    hi = np.where(full, phx + math.pi, hw)
    width = np.maximum(np.abs(rho - r), 1e-12 * r) / r
    width = np.maximum(width, np.abs(centre - phx) * 0.5)
    tlo = np.arcsinh((lo - centre) / width)
    thi = np.arcsinh((hi - centre) / width)
    t, wt = gauss_nodes(npts, tlo, thi)                      # (R, npts)
    phi = centre[:, None] + width[:, None] * np.sinh(t)
    jac = wt * width[:, None] * np.cosh(t)
    y = np.stack([rho[:, None] * np.cos(phi), rho[:, None] * np.sin(phi)], axis=-1)
    r2 = np.sum((y - x) ** 2, axis=-1)
    f = u(y) if part == "load" else 1.0
    vals = f * r2 ** (-0.5 * expo) * jac
    return float(np.sum(wr * rho * np.sum(vals, axis=1)))


def region_piece_neumann(u, x, piece, params, npts=None):
    """int_piece (u(x) - u(y)) |x - y|^{-d-2s} dy by direct polar quadrature (no a_{d,s})."""
    npts = npts or params.quad.direct_points
    x = np.asarray(x, dtype=float)
    ux = float(u(x[None, :])[0])
    mass = _piece_integral(u, x, piece, params.s, npts, "mass")
    load = _piece_integral(u, x, piece, params.s, npts, "load")
    return ux * mass - load


def region_neumann(u, x, region, params, npts=None):
    """(N_s u(x), error estimate) over an analytic region, comparing n and 2n rules."""
    from .geometry import OMEGA

    x = np.asarray(x, dtype=float)
    if region.label_points(x[None, :])[0] == OMEGA:
        raise DomainError("Neumann operator evaluated at a point of Omega")
    npts = npts or params.quad.direct_points
    coarse = sum(region_piece_neumann(u, x, pc, params, npts) for pc in region.pieces.values())
    fine = sum(region_piece_neumann(u, x, pc, params, 2 * npts) for pc in region.pieces.values())
    a = params.a_ds
    return a * fine, a * abs(fine - coarse)


# ------------------------------------------------------------ fractional Laplacian

def _sphere_sum(u, x, r):
    """Sum (d=1) or integral (d=2) of u over the sphere |y - x| = r."""
    d = x.shape[0]
    if d == 1:
        return float(u(np.array([[x[0] + r], [x[0] - r]])).sum())
    phx = math.atan2(-x[1], -x[0])  # direction toward the origin

    def f(th):
        y = np.array([[x[0] + r * math.cos(th), x[1] + r * math.sin(th)]])
        return float(u(y)[0])

    val, _ = integrate.quad(f, phx - math.pi, phx + math.pi, points=[phx],
                            limit=200, epsabs=1e-13, epsrel=1e-11)
    return val


def frac_laplacian_at(u, x, params, r0=None):
    """a_{d,s} P.V. int (u(x) - u(y)) |x - y|^{-d-2s} dy at one point.

    Written radially about x as a_{d,s} int_0^inf r^{-1-2s} (|S| u(x) - S(r)) dr,
    S(r) the sphere sum/integral of u.  On [0, r0] the symmetric pairing keeps
    the integrand O(r^{1-2s}); the innermost piece uses the second difference.
    """
    d, s = params.d, params.s
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if getattr(u, "pole", False) and np.linalg.norm(x) == 0.0:
        raise DomainError("x is a pole of u")
    ux = float(u(x[None, :])[0])
    if not np.isfinite(ux):
        raise DomainError("x is a pole of u")
    area = 2.0 if d == 1 else TWO_PI
    rx = float(np.linalg.norm(x))
    if r0 is None:
        r0 = 0.5 * rx if getattr(u, "pole", False) else 1.0
    delta = 1e-3 * r0

    def g(r):
        return (area * ux - _sphere_sum(u, x, r)) * r ** (-1.0 - 2 * s)

    # innermost shell: second-difference estimate of the sphere defect
    inner = (area * ux - _sphere_sum(u, x, delta)) / delta**2 * delta ** (2 - 2 * s) / (2 - 2 * s)
    total = inner
    total += integrate.quad(g, delta, r0, limit=200, epsabs=0.0, epsrel=1e-10)[0]
    pts = sorted({r0, rx, 2 * rx} if getattr(u, "pole", False) else {r0})
    pts = [p for p in pts if p >= r0]
    bounds = pts + [math.inf]
    for a, b in zip(bounds[:-1], bounds[1:]):
        total += integrate.quad(g, a, b, limit=400, epsabs=1e-14, epsrel=1e-10)[0]
    return params.a_ds * total
