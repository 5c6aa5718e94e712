"""Pure-numpy reference implementations of the hot kernels.

Semantically identical to the numba versions in `_kernels_numba`; kept
vectorized so the fallback path stays usable on real problem sizes.
"""

import numpy as np
from scipy.special import erf

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x):
    """Exact (erf-based) GELU, elementwise."""
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x, dy):
    """dy * d/dx GELU(x)."""
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return dy * (cdf + x * pdf)


def rotary_rotate(v, cos_t, sin_t):
    """Rotate consecutive pairs of each row.

    v: (N, 2P); cos_t, sin_t: (N, P) per-pair rotation angles.
    Pair n of row i is rotated by the angle whose cosine/sine is given.
    """
    a = v[:, 0::2]
    b = v[:, 1::2]
    out = np.empty_like(v)
    out[:, 0::2] = a * cos_t - b * sin_t
    out[:, 1::2] = a * sin_t + b * cos_t
    return out


def softmax_rows(scores):
    """Row-wise softmax with max subtraction for overflow safety."""
    m = scores.max(axis=1, keepdims=True)
    e = np.exp(scores - m)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_grad(a, da):
    """Backward of row softmax: a * (da - sum(da * a, row))."""
    t = (da * a).sum(axis=1, keepdims=True)
    return a * (da - t)


def entropy_rows(a, eps):
    """Shannon entropy -sum a*ln(a+eps) per row; zero entries contribute 0."""
    terms = np.where(a > 0.0, a * np.log(a + eps), 0.0)
    return -terms.sum(axis=1)
