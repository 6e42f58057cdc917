"""Compiled inner loops for the trajectory engine."""
import math

import numpy as np
from numba import njit

OK = 0
NON_FINITE = 1


@njit(cache=True, nogil=True)
def resort(perm, x):
    """Insertion sort of ``perm`` by (x[p], p); O(N) when nearly sorted."""
    n = perm.size
    for a in range(1, n):
        p = perm[a]
        xp = x[p]
        b = a - 1
        while b >= 0:
            q = perm[b]
            if x[q] > xp or (x[q] == xp and q > p):
                perm[b + 1] = q
                b -= 1
            else:
                break
        perm[b + 1] = p


@njit(cache=True, nogil=True)
def euler_piece(x, perm, dt, g, factor, diagonal, z):
    resort(perm, x)
    n = x.size
    sq = math.sqrt(dt)
    for k in range(n):
        if diagonal:
            noise = factor[k, k] * z[k]
        else:
            noise = 0.0
            for j in range(k + 1):
                noise += factor[k, j] * z[j]
        x[perm[k]] += g[k] * dt + sq * noise


@njit(cache=True, nogil=True)
def jump(x, perm, zeta, post_ranking):
    resort(perm, x)
    n = x.size
    base = x.copy()
    for k in range(n):
        x[perm[k]] = base[perm[k]] + zeta[k]
    if post_ranking:
        # fixed point: ranks read from the post-jump state itself;
        # without one, keep the pre-jump reading
        pre = perm.copy()
        trial = perm.copy()
        converged = False
        for _ in range(4 * n):
            resort(trial, x)
            same = True
            for k in range(n):
                if trial[k] != perm[k]:
                    same = False
                    break
            if same:
                converged = True
                break
            for k in range(n):
                perm[k] = trial[k]
            for k in range(n):
                x[perm[k]] = base[perm[k]] + zeta[k]
        if not converged:
            for k in range(n):
                perm[k] = pre[k]
                x[pre[k]] = base[pre[k]] + zeta[k]


@njit(cache=True, nogil=True)
def all_finite(x):
    for v in x:
        if not math.isfinite(v):
            return False
    return True


@njit(cache=True, nogil=True)
def run_chunk(x, perm, t, step0, n_chunk, n_total, h, horizon, g, factor, diagonal,
              z, taus, zetas, splits, jptr, stride, post_ranking,
              out_t, out_x, out_jump, pre_x):
    """Advance ``n_chunk`` grid steps, splitting steps at jump epochs.

    The piece of a step that starts at a grid point uses ``z[s]``; a piece
    that starts at jump ``j`` uses ``splits[j]``.  Returns
    ``(records, jptr, t, status)``.
    """
    rec = 0
    n_jumps = taus.size
    for s in range(n_chunk):
        n = step0 + s
        t_end = horizon if n + 1 >= n_total else (n + 1) * h
        noise = z[s]
        while jptr < n_jumps and taus[jptr] <= t_end:
            dt = taus[jptr] - t
            if dt > 0.0:
                euler_piece(x, perm, dt, g, factor, diagonal, noise)
            pre_x[jptr, :] = x
            jump(x, perm, zetas[jptr], post_ranking)
            t = taus[jptr]
            out_t[rec] = t
            out_x[rec, :] = x
            out_jump[rec] = True
            rec += 1
            noise = splits[jptr]
            jptr += 1
            if not all_finite(x):
                return rec, jptr, t, NON_FINITE
        dt = t_end - t
        if dt > 0.0:
            euler_piece(x, perm, dt, g, factor, diagonal, noise)
        t = t_end
        if not all_finite(x):
            return rec, jptr, t, NON_FINITE
        if (n + 1) % stride == 0 or n + 1 == n_total:
            out_t[rec] = t
            out_x[rec, :] = x
            out_jump[rec] = False
            rec += 1
    return rec, jptr, t, OK
