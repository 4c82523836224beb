"""Numba kernels behind the prox and the Monte-Carlo machinery.

Everything here works in the sorted-magnitude representation: callers sort
|u| in decreasing order and subtract the weight ladder, the kernels pool
adjacent violators.  Adjacent blocks with equal means are pooled as well,
so block values come out strictly decreasing and every positive block is a
maximal tie group of the solution.

The panel kernels split into a sort pass and a stats pass because the
sort order of |x + sigma*h| depends on sigma but not on the penalty
level: line searches over chi at fixed sigma reuse one sorted panel,
which is what keeps the fixed-point solves affordable.
"""

import numpy as np
from numba import njit, prange

__all__ = [
    "pava_blocks",
    "pava_expand",
    "prox_eta",
    "sort_panel",
    "presorted_stats",
]


@njit(cache=True)
def pava_blocks(z, vals, cnts):
    """Pool adjacent violators for a nonincreasing fit on `z`.

    `vals` and `cnts` are scratch arrays of length >= len(z); on return
    vals[:m] holds the block means and cnts[:m] the block lengths.
    Returns the number of blocks m.  Runs in linear time.
    """
    m = 0
    for i in range(z.shape[0]):
        v = z[i]
        c = 1
        # merge on <= so exactly-tied neighbours land in one block
        while m > 0 and vals[m - 1] <= v:
            v = (vals[m - 1] * cnts[m - 1] + v * c) / (cnts[m - 1] + c)
            c += cnts[m - 1]
            m -= 1
        vals[m] = v
        cnts[m] = c
        m += 1
    return m


@njit(cache=True)
def pava_expand(z):
    """Nonincreasing isotonic fit of `z`, expanded back to a vector."""
    n = z.shape[0]
    vals = np.empty(n, np.float64)
    cnts = np.empty(n, np.int64)
    m = pava_blocks(z, vals, cnts)
    out = np.empty(n, np.float64)
    pos = 0
    for b in range(m):
        for t in range(cnts[b]):
            out[pos + t] = vals[b]
        pos += cnts[b]
    return out


@njit(cache=True)
def prox_eta(u, glam):
    """Prox value for one vector; `glam` is gamma * weights (length p).

    Returns eta only (no group bookkeeping); used inside solver loops.
    """
    p = u.shape[0]
    uabs = np.abs(u)
    order = np.argsort(-uabs, kind="mergesort")
    z = np.empty(p, np.float64)
    for j in range(p):
        z[j] = uabs[order[j]] - glam[j]
    vals = np.empty(p, np.float64)
    cnts = np.empty(p, np.int64)
    m = pava_blocks(z, vals, cnts)
    eta = np.zeros(p, np.float64)
    pos = 0
    for b in range(m):
        v = vals[b]
        if v <= 0.0:
            break
        for t in range(pos, pos + cnts[b]):
            k = order[t]
            eta[k] = v if u[k] >= 0.0 else -v
        pos += cnts[b]
    return eta


@njit(cache=True, parallel=True)
def sort_panel(x, H, sigma):
    """Sort each row of u = x + sigma*h by decreasing |u|.

    Returns (US, XP, HP): the signed u values in sorted order and the
    matching permutations of the signal and the panel row.
    """
    S, p = H.shape
    US = np.empty((S, p), np.float64)
    XP = np.empty((S, p), np.float64)
    HP = np.empty((S, p), np.float64)
    for s in prange(S):
        u = np.empty(p, np.float64)
        uabs = np.empty(p, np.float64)
        for j in range(p):
            uj = x[j] + sigma * H[s, j]
            u[j] = uj
            uabs[j] = -abs(uj)
        order = np.argsort(uabs)
        for j in range(p):
            k = order[j]
            US[s, j] = u[k]
            XP[s, j] = x[k]
            HP[s, j] = H[s, k]
    return US, XP, HP


@njit(cache=True, parallel=True)
def presorted_stats(US, XP, HP, glam):
    """Per-sample prox statistics over a sorted panel.

    `glam` is the full penalty ladder (level times weights).  For each
    row returns

      risk[s]    = ||eta - x||^2
      inner[s]   = <eta, h>
      ngroups[s] = number of tie groups with nonzero value

    with sums over coordinates; callers divide by p and average.
    """
    S, p = US.shape
    risk = np.empty(S, np.float64)
    inner = np.empty(S, np.float64)
    ngroups = np.empty(S, np.float64)
    for s in prange(S):
        z = np.empty(p, np.float64)
        for j in range(p):
            z[j] = abs(US[s, j]) - glam[j]
        vals = np.empty(p, np.float64)
        cnts = np.empty(p, np.int64)
        m = pava_blocks(z, vals, cnts)
        r = 0.0
        cr = 0.0
        na = 0.0
        pos = 0
        for b in range(m):
            v = vals[b]
            if v > 0.0:
                na += 1.0
                for t in range(pos, pos + cnts[b]):
                    e = v if US[s, t] >= 0.0 else -v
                    d = e - XP[s, t]
                    r += d * d
                    cr += e * HP[s, t]
            else:
                for t in range(pos, pos + cnts[b]):
                    r += XP[s, t] * XP[s, t]
            pos += cnts[b]
        risk[s] = r
        inner[s] = cr
        ngroups[s] = na
    return risk, inner, ngroups
