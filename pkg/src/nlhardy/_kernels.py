"""Hot inner loops, compiled with numba when available.

Set ``NLHARDY_NUMBA=0`` to force the pure-numpy path (identical results up to
summation order).  ``NLHARDY_THREADS`` is read by the CLI only.
"""
import os

import numpy as np

_BLOCK = 256


def _want_numba():
    flag = os.environ.get("NLHARDY_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


# ---------------------------------------------------------------- numpy path

def conductance_numpy(labels, coords, table, n, scale, omega):
    m, d = coords.shape
    om = labels == omega
    out = np.zeros((m, m))
    for start in range(0, m, _BLOCK):
        stop = min(start + _BLOCK, m)
        off = np.abs(coords[start:stop, None, :] - coords[None, :, :])
        idx = off[..., 0] if d == 1 else off[..., 0] * n + off[..., 1]
        blk = table[idx] * scale
        blk[~(om[start:stop, None] | om[None, :])] = 0.0
        out[start:stop] = blk
    out[np.arange(m), np.arange(m)] = 0.0
    return out


def kernel_sum_numpy(xs, ys, w, expo):
    out = np.empty(len(xs))
    for start in range(0, len(xs), 64):
        diff = xs[start:start + 64, None, :] - ys[None, :, :]
        r2 = np.einsum("pqk,pqk->pq", diff, diff)
        out[start:start + 64] = (r2 ** (-0.5 * expo)) @ w
    return out


def picone_remainder_numpy(c, u, v):
    ratio = np.sqrt(u[None, :] / u[:, None])
    term = v[:, None] * ratio - v[None, :] / ratio
    return 0.5 * float(np.sum(c * term * term))


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def conductance_numba(labels, coords, table, n, scale, omega):
        m, d = coords.shape
        out = np.zeros((m, m))
        for i in range(m):
            for j in range(i + 1, m):
                if labels[i] != omega and labels[j] != omega:
                    continue
                idx = abs(coords[i, 0] - coords[j, 0])
                if d == 2:
                    idx = idx * n + abs(coords[i, 1] - coords[j, 1])
                w = table[idx] * scale
                out[i, j] = w
                out[j, i] = w
        return out

    @numba.njit(cache=True)
    def kernel_sum_numba(xs, ys, w, expo):
        p, d = xs.shape
        out = np.zeros(p)
        half = -0.5 * expo
        for a in range(p):
            acc = 0.0
            for b in range(ys.shape[0]):
                r2 = 0.0
                for k in range(d):
                    t = xs[a, k] - ys[b, k]
                    r2 += t * t
                acc += w[b] * r2**half
            out[a] = acc
        return out

    @numba.njit(cache=True)
    def picone_remainder_numba(c, u, v):
        m = u.shape[0]
        acc = 0.0
        for i in range(m):
            for j in range(i + 1, m):
                cij = c[i, j]
                if cij == 0.0:
                    continue
                r = np.sqrt(u[j] / u[i])
                t = v[i] * r - v[j] / r
                acc += cij * t * t
        return acc


# ---------------------------------------------------------------- dispatch

def use_numba():
    return HAVE_NUMBA and _want_numba()


def conductance(labels, coords, table, n, scale, omega):
    """Dense symmetric pair-conductance matrix over all cells (zero diagonal).

    Entry (i, j) is ``scale * table[|k_i - k_j|]`` when i or j is an Omega cell,
    0 otherwise.
    """
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    coords = np.ascontiguousarray(coords, dtype=np.int64)
    table = np.ascontiguousarray(table, dtype=np.float64).reshape(-1)
    if use_numba():
        return conductance_numba(labels, coords, table, int(n), float(scale), int(omega))
    return conductance_numpy(labels, coords, table, int(n), float(scale), int(omega))


def kernel_sum(xs, ys, w, expo):
    """out[p] = sum_q w[q] * |xs[p] - ys[q]|^(-expo)."""
    xs = np.ascontiguousarray(np.atleast_2d(xs), dtype=np.float64)
    ys = np.ascontiguousarray(np.atleast_2d(ys), dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if use_numba():
        return kernel_sum_numba(xs, ys, w, float(expo))
    return kernel_sum_numpy(xs, ys, w, float(expo))


def picone_remainder(c, u, v):
    """sum_{i<j} c_ij (v_i sqrt(u_j/u_i) - v_j sqrt(u_i/u_j))^2."""
    c = np.ascontiguousarray(c, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    if use_numba():
        return float(picone_remainder_numba(c, u, v))
    return picone_remainder_numpy(c, u, v)
