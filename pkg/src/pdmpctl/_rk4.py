"""Compiled scalar RK4 helpers for polynomial velocity fields."""
import math

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def _speed(c, x):
    out = 0.0
    for i in range(c.size - 1, -1, -1):
        out = out * x + c[i]
    return out


@numba.njit(cache=True, nogil=True)
def rk4_step(c, x, h):
    k1 = _speed(c, x)
    k2 = _speed(c, x + 0.5 * h * k1)
    k3 = _speed(c, x + 0.5 * h * k2)
    k4 = _speed(c, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@numba.njit(cache=True, nogil=True)
def rk4_flow(c, x, t, step):
    """x after time t (negative t integrates backward) with n = ceil(|t|/step) equal steps."""
    if t == 0.0:
        return x
    n = max(1, int(math.ceil(abs(t) / step - 1e-9)))
    h = t / n
    for _ in range(n):
        x = rk4_step(c, x, h)
    return x


@numba.njit(cache=True, nogil=True)
def rk4_exit(c, x, z, step, tol):
    """First time the RK4 march from x reaches level z: whole steps, then bisection in the last one."""
    sign = 1.0 if _speed(c, x) > 0 else -1.0
    y, s = x, 0.0
    while True:
        y_next = rk4_step(c, y, step)
        if sign * (y_next - z) >= 0:
            break
        y, s = y_next, s + step
    lo, hi = 0.0, step
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if sign * (rk4_step(c, y, mid) - z) < 0:
            lo = mid
        else:
            hi = mid
    return s + 0.5 * (lo + hi)


@numba.njit(cache=True, nogil=True)
def rk4_flow_times(c, x, ts, step):
    out = np.empty(ts.size)
    for i in range(ts.size):
        out[i] = rk4_flow(c, x, ts[i], step)
    return out


@numba.njit(cache=True, nogil=True)
def rk4_flow_states(c, xs, t, step):
    out = np.empty(xs.size)
    for i in range(xs.size):
        out[i] = rk4_flow(c, xs[i], t, step)
    return out


def as_coefficients(coefficients):
    return np.asarray(coefficients, dtype=np.float64)
