# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_kernels_py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport ceil, floor, fabs, sqrt, pow

cnp.import_array()

IMPL = "cython"


def ball_successors(centers, kmin, h, counts, double radius, bint norm_inf, double tol):
    cdef double[:, ::1] c = np.ascontiguousarray(centers, dtype=np.float64)
    cdef long long[::1] km = np.ascontiguousarray(kmin, dtype=np.int64)
    cdef double[::1] hh = np.ascontiguousarray(h, dtype=np.float64)
    cdef long long[::1] cnt = np.ascontiguousarray(counts, dtype=np.int64)
    cdef Py_ssize_t m = c.shape[0], n = c.shape[1]
    cdef double r = radius + tol
    cdef long long[::1] lo = np.empty(n, dtype=np.int64)
    cdef long long[::1] hi = np.empty(n, dtype=np.int64)
    cdef long long[::1] cur = np.empty(n, dtype=np.int64)
    cdef long long[::1] strides = np.ones(n, dtype=np.int64)
    cdef Py_ssize_t a, i
    cdef long long flat
    cdef double d, diff, p
    cdef bint empty, done
    for a in range(n - 2, -1, -1):
        strides[a] = strides[a + 1] * cnt[a + 1]
    ptr = np.zeros(m + 1, dtype=np.int64)
    cdef long long[::1] pv = ptr
    cap = max(16, 4 * m)
    ids = np.empty(cap, dtype=np.int64)
    cdef long long[::1] iv = ids
    cdef Py_ssize_t nout = 0
    for i in range(m):
        empty = False
        for a in range(n):
            lo[a] = <long long>ceil((c[i, a] - r) / hh[a] - km[a] - 1e-9)
            hi[a] = <long long>floor((c[i, a] + r) / hh[a] - km[a] + 1e-9)
            if lo[a] < 0:
                lo[a] = 0
            if hi[a] > cnt[a] - 1:
                hi[a] = cnt[a] - 1
            if hi[a] < lo[a]:
                empty = True
            cur[a] = lo[a]
        if not empty:
            done = False
            while not done:
                d = 0.0
                flat = 0
                for a in range(n):
                    p = (km[a] + cur[a]) * hh[a]
                    diff = fabs(p - c[i, a])
                    if norm_inf:
                        if diff > d:
                            d = diff
                    else:
                        d += diff * diff
                    flat += cur[a] * strides[a]
                if not norm_inf:
                    d = sqrt(d)
                if d <= r:
                    if nout >= iv.shape[0]:
                        ids = np.concatenate([ids, np.empty(iv.shape[0], dtype=np.int64)])
                        iv = ids
                    iv[nout] = flat
                    nout += 1
                # odometer increment, last axis fastest
                a = n - 1
                while True:
                    if a < 0:
                        done = True
                        break
                    cur[a] += 1
                    if cur[a] <= hi[a]:
                        break
                    cur[a] = lo[a]
                    a -= 1
                if n == 0:
                    done = True
        pv[i + 1] = nout
    return ptr, ids[:nout].copy()


def safety_rounds(Py_ssize_t n_x, Py_ssize_t n_b, grp_state, grp_ptr, key_ptr, succ, bn, safe):
    cdef long long[::1] gs = np.ascontiguousarray(grp_state, dtype=np.int64)
    cdef long long[::1] gp = np.ascontiguousarray(grp_ptr, dtype=np.int64)
    cdef long long[::1] kp = np.ascontiguousarray(key_ptr, dtype=np.int64)
    cdef long long[::1] sc = np.ascontiguousarray(succ, dtype=np.int64)
    cdef long long[:, ::1] nb = np.ascontiguousarray(bn, dtype=np.int64)
    cdef cnp.uint8_t[:, ::1] sf = np.ascontiguousarray(safe, dtype=np.uint8)
    win_arr = np.ones((n_x, n_b), dtype=np.uint8)
    new_arr = np.zeros((n_x, n_b), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] win = win_arr
    cdef cnp.uint8_t[:, ::1] new = new_arr
    cdef Py_ssize_t n_g = gs.shape[0], g, k, q, j, x
    cdef int rounds = 0
    cdef bint ok, changed
    while True:
        rounds += 1
        new[:, :] = 0
        for g in range(n_g):
            x = gs[g]
            if gp[g + 1] == gp[g]:
                continue
            for j in range(n_b):
                if new[x, j]:
                    continue
                ok = True
                for k in range(gp[g], gp[g + 1]):
                    if not sf[k, j]:
                        ok = False
                        break
                    for q in range(kp[k], kp[k + 1]):
                        if not win[sc[q], nb[k, j]]:
                            ok = False
                            break
                    if not ok:
                        break
                if ok:
                    new[x, j] = 1
        changed = False
        for x in range(n_x):
            for j in range(n_b):
                if new[x, j] != win[x, j]:
                    changed = True
                win[x, j] = new[x, j]
        if not changed:
            return win_arr, rounds


def rhs_bruteforce(g, int kind, double param):
    cdef double[::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef Py_ssize_t T = gv.shape[0], t, s
    out = np.zeros(T, dtype=np.float64)
    cdef double[::1] ov = out
    # powers by lag, computed as numpy does so both paths agree bitwise
    cdef double[::1] pw = np.power(param, np.arange(max(T, 1), dtype=np.float64))
    cdef double best, v
    for t in range(T):
        best = 0.0
        for s in range(t + 1):
            if kind == 0:
                v = gv[s] * pw[t - s]
            elif kind == 1:
                v = gv[s] - param * (t - s)
                if v < 0:
                    v = 0.0
            else:
                v = gv[s] if s == t else 0.0
            if s == 0 or v > best:
                best = v
        ov[t] = best
    return out
