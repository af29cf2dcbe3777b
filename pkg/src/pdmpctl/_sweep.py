"""Compiled inner loops for the along-flow backward recursion.

Row arrays are indexed [row, action] and kernel atoms [row, action, slot];
padding slots carry weight 0.  ``hs`` holds the support values of h with
its last entry repeated once so that index j+1 is always valid.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _qh(hs, aj, af, aw, r, a):
    s = 0.0
    for q in range(aw.shape[2]):
        wq = aw[r, a, q]
        if wq != 0.0:
            j = aj[r, a, q]
            fr = af[r, a, q]
            s += wq * ((1.0 - fr) * hs[j] + fr * hs[j + 1])
    return s


@njit(cache=True, nogil=True)
def _argmin(w, lam, f, feas, aj, af, aw, hs, r):
    best = np.inf
    ba = -1
    bq = 0.0
    for a in range(lam.shape[1]):
        if not feas[r, a]:
            continue
        q = _qh(hs, aj, af, aw, r, a)
        obj = f[r, a] - lam[r, a] * (w - q)
        if obj < best:
            best = obj
            ba = a
            bq = q
    return ba, bq


@njit(cache=True, nogil=True)
def sweep_chain(w0, lam, f, feas, aj, af, aw, dt, hs, alpha, rho, out_w, out_a):
    """out_w[0] = w0; row r steps from out_w[r] back to out_w[r + 1]."""
    w = w0
    out_w[0] = w
    for r in range(lam.shape[0]):
        ba, q = _argmin(w, lam, f, feas, aj, af, aw, hs, r)
        if ba < 0:
            return r
        l = lam[r, ba]
        w = (1.0 - (alpha + l) * dt[r]) * w + dt[r] * (f[r, ba] + l * q - rho)
        out_w[r + 1] = w
        out_a[r] = ba
    return -1


@njit(cache=True, nogil=True)
def sweep_nodes(chain_w, down, lam, f, feas, aj, af, aw, dt, hs, alpha, rho, out_w, out_a):
    """Partial step from chain_w[down[i]] back to node i."""
    for i in range(lam.shape[0]):
        w = chain_w[down[i]]
        ba, q = _argmin(w, lam, f, feas, aj, af, aw, hs, i)
        if ba < 0:
            return i
        l = lam[i, ba]
        out_w[i] = (1.0 - (alpha + l) * dt[i]) * w + dt[i] * (f[i, ba] + l * q - rho)
        out_a[i] = ba
    return -1


@njit(cache=True, nogil=True)
def terminal_min(cost, feas, aj, af, aw, hs):
    """min over feasible actions of cost[a] + Qh on a single boundary row."""
    best = np.inf
    ba = -1
    for a in range(cost.shape[1]):
        if not feas[0, a]:
            continue
        v = cost[0, a] + _qh(hs, aj, af, aw, 0, a)
        if v < best:
            best = v
            ba = a
    return ba, best
