"""Lateral inhibition layer.

The transform scales every hypercolumn activation by one plus its softmax
score, z_i = a_i * (1 + s_i), so the strongest neuron of a hypercolumn
amplifies itself relative to its antagonists.  The layer has no
parameters; the backward pass uses the exact Jacobian

    J_ij = delta_ij * (1 + s_i) + a_i * s_i * (delta_ij - s_j)

including the cross terms through the shared softmax.  The per-pair
amplification factors gamma (diagonal) and beta (off-diagonal) are
exposed separately as diagnostics of the gradient-scaling behaviour.

Optionally the input is hard-clamped to a symmetric range before the
transform; clamped coordinates then carry zero gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import softmax


@dataclass(frozen=True)
class LilConfig:
    clip_input: bool = False
    clip_range: tuple[float, float] = (-6.0, 6.0)

    def __post_init__(self):
        lo, hi = self.clip_range
        if self.clip_input and not (lo < 0.0 < hi and lo == -hi):
            raise ValueError(f"clip_range must be symmetric around 0, got {self.clip_range}")


DEFAULT_CONFIG = LilConfig()


def _clip(a: np.ndarray, cfg: LilConfig):
    if not cfg.clip_input:
        return a, None
    lo, hi = cfg.clip_range
    inside = (a > lo) & (a < hi)
    return np.clip(a, lo, hi), inside


def lil_forward(a: np.ndarray, cfg: LilConfig = DEFAULT_CONFIG) -> np.ndarray:
    """z = a * (1 + softmax(a)), softmax over the last (channel) axis."""
    ac, _ = _clip(a, cfg)
    return ac * (1.0 + softmax(ac))


def lil_backward(upstream: np.ndarray, a: np.ndarray,
                 cfg: LilConfig = DEFAULT_CONFIG) -> np.ndarray:
    """grad_a = J^T @ upstream per hypercolumn, without forming J.

    J^T u collapses to  u * (1 + s + a*s) - s * sum(a * s * u).
    """
    ac, inside = _clip(a, cfg)
    s = softmax(ac)
    inner = (ac * s * upstream).sum(axis=-1, keepdims=True)
    grad = upstream * (1.0 + s + ac * s) - s * inner
    if inside is not None:
        grad = grad * inside
    return grad


def lil_jacobian(a: np.ndarray) -> np.ndarray:
    """Exact Jacobian J_ij = dz_i/da_j for one activation vector."""
    a = np.asarray(a, dtype=np.float64)
    s = softmax(a)
    jac = np.diag(1.0 + s + a * s) - np.outer(a * s, s)
    return jac


def amplification_factors(a: np.ndarray, i: int, j: int) -> float:
    """Gradient scaling factor phi(i, j) = 1 + s_i + a_i*s_i*([i=j] - s_j).

    For i == j this is gamma, for i != j beta; both tend to 2 as the
    winner's softmax score tends to 1, which is the amplification the
    layer is designed to produce.
    """
    a = np.asarray(a, dtype=np.float64)
    s = softmax(a)
    delta = 1.0 if i == j else 0.0
    return float(1.0 + s[i] + a[i] * s[i] * (delta - s[j]))
