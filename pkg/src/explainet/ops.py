"""Dense tensor primitives with paired forward/backward operations.

Arrays are numpy ndarrays in channels-last layout: images are [H, W, C]
or batched [N, H, W, C], so a hypercolumn (all channel activations at one
spatial position) is a contiguous slice.  There is no autodiff graph;
each layer exposes an explicit backward that computes gradients of
sum(upstream * output) w.r.t. its inputs.

Backwards are verified against central finite differences at 64-bit in
the test suite, independent of the 32-bit training path.
"""

from __future__ import annotations

import numpy as np

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.1


class ShapeError(ValueError):
    """Inconsistent operand shapes or configuration."""


def _check_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {what}")


def _as_batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected [H,W,C] or [N,H,W,C], got shape {x.shape}")


def _same_pads(size: int, kernel: int, stride: int) -> tuple[int, int]:
    out = -(-size // stride)  # ceil
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _im2col(x: np.ndarray, n: int, stride: int, padding: str) -> tuple[np.ndarray, tuple]:
    """Column matrix [N*H'*W', n*n*Cin] plus geometry for the backward."""
    nb, h, w, cin = x.shape
    if padding == "same":
        pt, pb = _same_pads(h, n, stride)
        pl, pr = _same_pads(w, n, stride)
    elif padding == "valid":
        pt = pb = pl = pr = 0
    else:
        raise ShapeError(f"unknown padding {padding!r}")
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (n, n), axis=(1, 2))
    win = win[:, ::stride, ::stride]          # [N, H', W', Cin, n, n]
    ho, wo = win.shape[1], win.shape[2]
    cols = win.transpose(0, 1, 2, 4, 5, 3)    # [..., n, n, Cin]
    cols = np.ascontiguousarray(cols).reshape(nb * ho * wo, n * n * cin)
    return cols, (xp.shape, (pt, pb, pl, pr), ho, wo)


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
           stride: int = 1, padding: str = "same") -> np.ndarray:
    """2D convolution (cross-correlation) of a channels-last image.

    kernel is [n, n, Cin, Cout] with n odd; `same` padding keeps the
    spatial extent at ceil(size / stride).
    """
    xb, squeeze = _as_batched(x)
    n, n2, cin, cout = kernel.shape
    if n != n2 or n % 2 == 0:
        raise ShapeError(f"kernel must be square with odd side, got {kernel.shape}")
    if stride not in (1, 2):
        raise ShapeError(f"stride must be 1 or 2, got {stride}")
    if xb.shape[3] != cin:
        raise ShapeError(f"input has {xb.shape[3]} channels, kernel expects {cin}")
    cols, (_, _, ho, wo) = _im2col(xb, n, stride, padding)
    out = cols @ kernel.reshape(n * n * cin, cout) + bias
    out = out.reshape(xb.shape[0], ho, wo, cout)
    return out[0] if squeeze else out


def conv2d_backward(x: np.ndarray, kernel: np.ndarray, upstream: np.ndarray,
                    stride: int = 1, padding: str = "same"):
    """Gradients of sum(upstream * conv2d(x, kernel, bias)).

    Returns (grad_input, grad_kernel, grad_bias).
    """
    xb, squeeze = _as_batched(x)
    ub = upstream[None] if squeeze else upstream
    n, _, cin, cout = kernel.shape
    cols, (xp_shape, (pt, pb, pl, pr), ho, wo) = _im2col(xb, n, stride, padding)
    if ub.shape != (xb.shape[0], ho, wo, cout):
        raise ShapeError(f"upstream shape {ub.shape} does not match forward "
                         f"output {(xb.shape[0], ho, wo, cout)}")
    uf = ub.reshape(-1, cout)
    grad_kernel = (cols.T @ uf).reshape(kernel.shape)
    grad_bias = uf.sum(axis=0)

    gxp = np.zeros(xp_shape, dtype=xb.dtype)
    for ki in range(n):
        for kj in range(n):
            patch = gxp[:, ki:ki + stride * ho:stride, kj:kj + stride * wo:stride]
            patch += ub @ kernel[ki, kj].T
    h, w = xb.shape[1], xb.shape[2]
    grad_input = gxp[:, pt:pt + h, pl:pl + w, :]
    if squeeze:
        grad_input = grad_input[0]
    return grad_input, grad_kernel, grad_bias


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------

def batch_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
               running_mean: np.ndarray, running_var: np.ndarray,
               mode: str, epsilon: float = BN_EPSILON):
    """Per-channel batch normalization over [N, H, W, C].

    Train mode normalizes with minibatch statistics and updates the
    running stats in place by exponential moving average (momentum 0.1).
    Infer mode uses the running stats and touches nothing.

    Returns (output, cache) where cache feeds batch_norm_backward.
    """
    if x.shape[0] == 0:
        raise ShapeError("batch normalization over an empty batch")
    axes = tuple(range(x.ndim - 1))
    if mode == "train":
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        running_mean *= 1.0 - BN_MOMENTUM
        running_mean += BN_MOMENTUM * mean
        running_var *= 1.0 - BN_MOMENTUM
        running_var += BN_MOMENTUM * var
    elif mode == "infer":
        mean, var = running_mean, running_var
    else:
        raise ShapeError(f"unknown batch norm mode {mode!r}")
    inv_std = 1.0 / np.sqrt(var + epsilon)
    xhat = (x - mean) * inv_std
    out = gamma * xhat + beta
    cache = (xhat, inv_std, gamma, mode)
    return out, cache


def batch_norm_backward(upstream: np.ndarray, cache):
    """Gradients (grad_x, grad_gamma, grad_beta) for batch_norm."""
    xhat, inv_std, gamma, mode = cache
    axes = tuple(range(upstream.ndim - 1))
    grad_gamma = (upstream * xhat).sum(axis=axes)
    grad_beta = upstream.sum(axis=axes)
    dxhat = upstream * gamma
    if mode == "infer":
        return dxhat * inv_std, grad_gamma, grad_beta
    m = upstream.size // upstream.shape[-1]
    grad_x = (inv_std / m) * (m * dxhat
                              - dxhat.sum(axis=axes)
                              - xhat * (dxhat * xhat).sum(axis=axes))
    return grad_x, grad_gamma, grad_beta


# ---------------------------------------------------------------------------
# elementwise / reductions / classifier head
# ---------------------------------------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(upstream: np.ndarray, x: np.ndarray) -> np.ndarray:
    return upstream * (x > 0)


def softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax; subtracts the max before exponentiating."""
    shifted = v - np.max(v, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def argsort_desc(v: np.ndarray) -> np.ndarray:
    """Indices ordered by non-increasing value, ties by ascending index."""
    return np.argsort(-np.asarray(v), axis=-1, kind="stable")


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """[N, H, W, C] -> [N, C] (or [H, W, C] -> [C]) spatial mean."""
    if x.ndim == 3:
        return x.mean(axis=(0, 1))
    return x.mean(axis=(1, 2))


def global_avg_pool_backward(upstream: np.ndarray, x_shape: tuple) -> np.ndarray:
    if len(x_shape) == 3:
        h, w, _ = x_shape
        return np.broadcast_to(upstream / (h * w), x_shape).copy()
    _, h, w, _ = x_shape
    return np.broadcast_to(upstream[:, None, None, :] / (h * w), x_shape).copy()


def fully_connected(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    if x.shape[-1] != weights.shape[0]:
        raise ShapeError(f"input width {x.shape[-1]} vs weight rows {weights.shape[0]}")
    return x @ weights + bias


def fully_connected_backward(x: np.ndarray, weights: np.ndarray, upstream: np.ndarray):
    xb = np.atleast_2d(x)
    ub = np.atleast_2d(upstream)
    grad_x = (ub @ weights.T).reshape(x.shape)
    grad_w = xb.T @ ub
    grad_b = ub.sum(axis=0)
    return grad_x, grad_w, grad_b


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy loss and its gradient w.r.t. the logits."""
    p = softmax(logits)
    n = logits.shape[0]
    loss = -np.log(np.maximum(p[np.arange(n), labels], 1e-300)).mean()
    grad = p.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n
