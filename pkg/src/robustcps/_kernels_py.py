"""Pure numpy implementations of the hot kernels.

Signatures and results match the compiled ``_kernels`` module exactly; this
module is used when the extension is not built or ``ROBUSTCPS_PURE=1``.
"""
from __future__ import annotations

import numpy as np

IMPL = "python"


def ball_successors(centers, kmin, h, counts, radius, norm_inf, tol):
    """Grid points within ``radius`` of each center.

    The grid has axis coordinates ``(kmin[a] + i) * h[a]`` for
    ``0 <= i < counts[a]`` and flat ids in row-major order.  Returns CSR
    ``(ptr, ids)`` with ids sorted per center.
    """
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    m, n = centers.shape
    kmin = np.asarray(kmin, dtype=np.int64)
    h = np.asarray(h, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.int64)
    r = radius + tol
    lo_i = np.ceil((centers - r) / h - kmin - 1e-9).astype(np.int64)
    hi_i = np.floor((centers + r) / h - kmin + 1e-9).astype(np.int64)
    lo_i = np.clip(lo_i, 0, counts)
    hi_i = np.clip(hi_i, -1, counts - 1)
    width = np.maximum(hi_i - lo_i + 1, 0)
    wmax = width.max(axis=0) if m else np.zeros(n, dtype=np.int64)
    # enumerate candidate offsets up to the widest window, then mask
    grids = np.meshgrid(*[np.arange(int(w)) for w in wmax], indexing="ij")
    offs = np.stack([g.ravel() for g in grids], axis=-1) if n else np.zeros((1, 0), dtype=np.int64)
    idx = lo_i[:, None, :] + offs[None, :, :]
    valid = np.all(offs[None, :, :] < width[:, None, :], axis=-1)
    pts = (kmin[None, None, :] + idx) * h[None, None, :]
    diff = np.abs(pts - centers[:, None, :])
    d = diff.max(axis=-1) if norm_inf else np.sqrt((diff * diff).sum(axis=-1))
    valid &= d <= r
    strides = np.ones(n, dtype=np.int64)
    for a in range(n - 2, -1, -1):
        strides[a] = strides[a + 1] * counts[a + 1]
    flat = (idx * strides).sum(axis=-1)
    cnt = valid.sum(axis=1)
    ptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(cnt, out=ptr[1:])
    ids = flat[valid]
    return ptr, ids.astype(np.int64)


def safety_rounds(n_x, n_b, grp_state, grp_ptr, key_ptr, succ, bn, safe):
    """Greatest fixed point of the safety game by synchronous rounds.

    Groups are (state, control) blocks of keys; a position (x, j) survives a
    round when some group of x has, for every key k in it, ``safe[k, j]``
    and every successor winning at bound index ``bn[k, j]``.
    Returns ``(win, rounds)``.
    """
    win = np.ones((n_x, n_b), dtype=np.uint8)
    n_keys = len(key_ptr) - 1
    counts = np.diff(key_ptr)
    key_of_succ = np.repeat(np.arange(n_keys), counts)
    grp_sizes = np.diff(grp_ptr)
    rounds = 0
    safe = np.asarray(safe, dtype=bool)
    while True:
        rounds += 1
        new = np.zeros_like(win)
        for j in range(n_b):
            if n_keys == 0:
                break
            vals = win[succ, bn[key_of_succ, j]]
            key_ok = np.minimum.reduceat(vals, key_ptr[:-1]) if len(vals) else np.zeros(0, np.uint8)
            key_ok = key_ok.astype(bool) & safe[:, j]
            if len(grp_state):
                g_ok = np.logical_and.reduceat(key_ok, grp_ptr[:-1]) & (grp_sizes > 0)
                np.maximum.at(new[:, j], grp_state, g_ok.astype(np.uint8))
        if np.array_equal(new, win):
            return win, rounds
        win = new


def rhs_bruteforce(g, kind, param):
    """rhs_t = max_{t' <= t} mu(g_{t'}, t - t'); kind 0 exponential(param),
    kind 1 linear decay(param), kind 2 zero KLD."""
    g = np.asarray(g, dtype=np.float64)
    T = len(g)
    out = np.zeros(T)
    for t in range(T):
        lag = t - np.arange(t + 1)
        if kind == 0:
            v = g[:t + 1] * np.power(param, lag)
        elif kind == 1:
            v = np.maximum(g[:t + 1] - param * lag, 0.0)
        else:
            v = np.where(lag == 0, g[:t + 1], 0.0)
        out[t] = v.max() if t >= 0 else 0.0
    return out
