"""Numba-compiled hot kernels.

Same contracts as `_kernels_numpy`. Loops are written in the same
accumulation order as numpy's row reductions so the two backends agree
to the usual float64 rounding noise. fastmath stays off: reassociation
would break run-to-run determinism guarantees.
"""

import math

import numpy as np
from numba import njit

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@njit(cache=True)
def gelu(x):
    out = np.empty_like(x)
    flat_x = x.ravel()
    flat_o = out.ravel()
    for i in range(flat_x.size):
        v = flat_x[i]
        flat_o[i] = 0.5 * v * (1.0 + math.erf(v / _SQRT2))
    return out


@njit(cache=True)
def gelu_grad(x, dy):
    out = np.empty_like(x)
    flat_x = x.ravel()
    flat_d = dy.ravel()
    flat_o = out.ravel()
    for i in range(flat_x.size):
        v = flat_x[i]
        cdf = 0.5 * (1.0 + math.erf(v / _SQRT2))
        pdf = _INV_SQRT_2PI * math.exp(-0.5 * v * v)
        flat_o[i] = flat_d[i] * (cdf + v * pdf)
    return out


@njit(cache=True)
def rotary_rotate(v, cos_t, sin_t):
    n, d = v.shape
    out = np.empty_like(v)
    for i in range(n):
        for p in range(d // 2):
            a = v[i, 2 * p]
            b = v[i, 2 * p + 1]
            c = cos_t[i, p]
            s = sin_t[i, p]
            out[i, 2 * p] = a * c - b * s
            out[i, 2 * p + 1] = a * s + b * c
    return out


@njit(cache=True)
def softmax_rows(scores):
    n, m = scores.shape
    out = np.empty_like(scores)
    for i in range(n):
        mx = scores[i, 0]
        for j in range(1, m):
            if scores[i, j] > mx:
                mx = scores[i, j]
        tot = 0.0
        for j in range(m):
            e = math.exp(scores[i, j] - mx)
            out[i, j] = e
            tot += e
        inv = 1.0 / tot
        for j in range(m):
            out[i, j] *= inv
    return out


@njit(cache=True)
def softmax_rows_grad(a, da):
    n, m = a.shape
    out = np.empty_like(a)
    for i in range(n):
        t = 0.0
        for j in range(m):
            t += da[i, j] * a[i, j]
        for j in range(m):
            out[i, j] = a[i, j] * (da[i, j] - t)
    return out


@njit(cache=True)
def entropy_rows(a, eps):
    n, m = a.shape
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        h = 0.0
        for j in range(m):
            v = a[i, j]
            if v > 0.0:
                h += v * math.log(v + eps)
        out[i] = -h
    return out
