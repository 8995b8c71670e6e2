"""Finite-difference and error helpers shared by the tests."""

import numpy as np


def central_diff(f, x, h=1e-6):
    """Central finite-difference Jacobian of f at x; f returns an array or scalar."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x))
    out = np.empty(f0.shape + x.shape, dtype=f0.dtype)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        out[..., i] = (np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h)
    return out


def rel_err(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
