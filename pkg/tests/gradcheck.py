"""Central finite-difference oracle for backward-pass tests.

Runs in float64 regardless of the dtype the training path uses, so the
comparison isolates algorithmic error from rounding.
"""

import numpy as np


def numerical_grad(fn, x, step=1e-5):
    """d fn / d x by central differences, elementwise; fn returns a scalar."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        hi = fn(x)
        flat[k] = orig - step
        lo = fn(x)
        flat[k] = orig
        gflat[k] = (hi - lo) / (2.0 * step)
    return grad


def rel_err(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    return np.abs(analytic - numeric).max() / denom
