"""Compiled Euler-Maruyama kernel with a counter-based random stream per path."""
from __future__ import annotations

import math

import numba as nb
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S32 = np.uint64(32)
_LOW32 = np.uint64(0xFFFFFFFF)

DRIFT_BESSEL = 0      # coef / s
DRIFT_COT = 1         # coef * k * cot(k s)
DRIFT_COTH = 2        # coef * k * coth(k s)
DRIFT_TABLE = 3       # ppoly(s) / s

STATUS_SURVIVED = 0
STATUS_HIT_LOWER = 1
STATUS_HIT_UPPER = 2
STATUS_EXITED = 3
STATUS_ABORTED = 4


@nb.njit(cache=True, nogil=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(cache=True, nogil=True)
def splitmix_next(state):
    """Advance a splitmix64 state; returns (new_state, output)."""
    state = state + GOLDEN
    return state, mix64(state)


@nb.njit(cache=True, nogil=True)
def path_key(seed, index):
    return mix64(mix64(np.uint64(seed)) + (np.uint64(index) + np.uint64(1)) * GOLDEN)


@nb.njit(cache=True, nogil=True)
def normal_pair(word):
    """Two standard normals from the two 32-bit halves of one 64-bit word."""
    u1 = ((word >> _S32) + 0.5) * 2.3283064365386963e-10
    u2 = ((word & _LOW32) + 0.5) * 2.3283064365386963e-10
    r = math.sqrt(-2.0 * math.log(u1))
    a = 2.0 * math.pi * u2
    return r * math.cos(a), r * math.sin(a)


@nb.njit(cache=True, nogil=True)
def _ppoly(x, c, s):
    n = x.shape[0] - 1
    lo, hi = 0, n - 1
    if s <= x[0]:
        i = 0
    elif s >= x[n]:
        i = n - 1
    else:
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if x[mid] <= s:
                lo = mid
            else:
                hi = mid - 1
        i = lo
    d = s - x[i]
    return ((c[0, i] * d + c[1, i]) * d + c[2, i]) * d + c[3, i]


@nb.njit(cache=True, nogil=True)
def drift(kind, params, tx, tc, s):
    if kind == 0:
        return params[0] / s
    if kind == 1:
        k = params[1]
        return params[0] * k / math.tan(k * s)
    if kind == 2:
        k = params[1]
        return params[0] * k / math.tanh(k * s)
    if s < tx[0] or s > tx[tx.shape[0] - 1]:
        return np.nan
    return _ppoly(tx, tc, s) / s


@nb.njit(cache=True, nogil=True)
def run_paths(first, count, seed, s0, dt, n_steps, lo_abs, hi_abs, lo_kill, hi_kill,
              kind, params, tx, tc, status, times):
    """Simulate paths first .. first+count-1 of dS = b(S)/2 dt + dW.

    Absorption levels are ``lo_abs`` and ``hi_abs``; ``lo_kill``/``hi_kill``
    say whether reaching them counts as a hit (characteristic point) or an
    exit.  Crossings are monitored at grid times only.
    """
    sq = math.sqrt(dt)
    for j in range(count):
        idx = first + j
        state = path_key(seed, idx)
        s = s0
        st = STATUS_SURVIVED
        t_hit = np.nan
        z_spare = 0.0
        have_spare = False
        for n in range(n_steps):
            bv = drift(kind, params, tx, tc, s)
            if not math.isfinite(bv):
                st = STATUS_ABORTED
                t_hit = n * dt
                break
            if have_spare:
                z = z_spare
                have_spare = False
            else:
                state, w = splitmix_next(state)
                z, z_spare = normal_pair(w)
                have_spare = True
            s_new = s + 0.5 * bv * dt + sq * z
            crossed = 0
            if s_new <= lo_abs:
                crossed = 1
            elif s_new >= hi_abs:
                crossed = 2
            s = s_new
            if crossed == 1:
                st = STATUS_HIT_LOWER if lo_kill else STATUS_EXITED
                t_hit = (n + 1) * dt
                break
            if crossed == 2:
                st = STATUS_HIT_UPPER if hi_kill else STATUS_EXITED
                t_hit = (n + 1) * dt
                break
        status[idx] = st
        times[idx] = t_hit


@nb.njit(cache=True)
def splitmix_stream(seed, n):
    out = np.empty(n, dtype=np.uint64)
    state = np.uint64(seed)
    for i in range(n):
        state, out[i] = splitmix_next(state)
    return out
