"""Forward-only tensor layers used by the context networks.

Tensors are float64 numpy arrays laid out as ``(channels, height, width)``.
Every dot product accumulates in ascending input index, one multiply-add at a
time in double precision, so encoder and decoder derive bit-identical entropy
parameters.  Vectorisation only runs across output elements, never across the
reduction.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def _as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def conv1x1(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Pointwise convolution; ``weight`` is ``(out, in)``."""
    x, weight, bias = _as_f64(x), _as_f64(weight), _as_f64(bias)
    if x.ndim != 3 or weight.ndim != 2 or weight.shape[1] != x.shape[0]:
        raise ShapeError(f"conv1x1: input {x.shape} vs weight {weight.shape}")
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"conv1x1: bias {bias.shape} vs weight {weight.shape}")
    out = np.empty((weight.shape[0],) + x.shape[1:])
    out[...] = bias[:, None, None]
    for k in range(x.shape[0]):
        out += weight[:, k, None, None] * x[k]
    return out


def depthwise_conv3x3(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Per-channel 3x3 cross-correlation with zero padding of 1."""
    x, kernels = _as_f64(x), _as_f64(kernels)
    if x.ndim != 3 or kernels.shape != (x.shape[0], 3, 3):
        raise ShapeError(f"depthwise_conv3x3: input {x.shape} vs kernels {kernels.shape}")
    c, h, w = x.shape
    padded = np.zeros((c, h + 2, w + 2))
    padded[:, 1:-1, 1:-1] = x
    out = np.zeros_like(x)
    if bias is not None:
        out[...] = _as_f64(bias)[:, None, None]
    for di in range(3):
        for dj in range(3):
            out += kernels[:, di, dj, None, None] * padded[:, di:di + h, dj:dj + w]
    return out


def linear(tokens: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map of a ``(tokens, dim_in)`` matrix; ``weight`` rows are outputs."""
    tokens, weight, bias = _as_f64(tokens), _as_f64(weight), _as_f64(bias)
    if tokens.ndim != 2 or weight.ndim != 2 or weight.shape[1] != tokens.shape[1]:
        raise ShapeError(f"linear: tokens {tokens.shape} vs weight {weight.shape}")
    out = np.empty((tokens.shape[0], weight.shape[0]))
    out[...] = bias[None, :]
    for k in range(tokens.shape[1]):
        out += tokens[:, k, None] * weight[None, :, k]
    return out


def matmul_ordered(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched ``a @ b`` over the last two axes with ascending-index accumulation."""
    out = np.zeros(a.shape[:-1] + b.shape[-1:])
    for k in range(a.shape[-1]):
        out += a[..., :, k, None] * b[..., None, k, :]
    return out


def softmax_rows(m: np.ndarray) -> np.ndarray:
    m = _as_f64(m)
    e = np.exp(m - m.max(axis=-1, keepdims=True))
    total = np.zeros(e.shape[:-1] + (1,))
    for k in range(e.shape[-1]):
        total += e[..., k:k + 1]
    return e / total


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def window_partition(x: np.ndarray, window: int) -> tuple[np.ndarray, tuple[int, int, int]]:
    """Split ``(C, H, W)`` into ``(num_windows, window*window, C)`` token groups.

    H and W are zero-padded up to a multiple of ``window``.  The returned shape
    tuple is what :func:`window_merge` needs to undo the split.
    """
    c, h, w = x.shape
    hp, wp = -(-h // window) * window, -(-w // window) * window
    if (hp, wp) != (h, w):
        padded = np.zeros((c, hp, wp), dtype=x.dtype)
        padded[:, :h, :w] = x
        x = padded
    t = x.reshape(c, hp // window, window, wp // window, window)
    t = t.transpose(1, 3, 2, 4, 0).reshape(-1, window * window, c)
    return np.ascontiguousarray(t), (c, h, w)


def window_merge(tokens: np.ndarray, shape: tuple[int, int, int], window: int) -> np.ndarray:
    c, h, w = shape
    hp, wp = -(-h // window) * window, -(-w // window) * window
    t = tokens.reshape(hp // window, wp // window, window, window, c)
    x = t.transpose(4, 0, 2, 1, 3).reshape(c, hp, wp)
    return np.ascontiguousarray(x[:, :h, :w])


def space_to_depth(x: np.ndarray, factor: int) -> np.ndarray:
    c, h, w = x.shape
    if h % factor or w % factor:
        raise ShapeError(f"space_to_depth: {h}x{w} not divisible by {factor}")
    t = x.reshape(c, h // factor, factor, w // factor, factor)
    return np.ascontiguousarray(t.transpose(0, 2, 4, 1, 3).reshape(c * factor * factor, h // factor, w // factor))


def depth_to_space(x: np.ndarray, factor: int) -> np.ndarray:
    c, h, w = x.shape
    if c % (factor * factor):
        raise ShapeError(f"depth_to_space: {c} channels not divisible by {factor * factor}")
    t = x.reshape(c // (factor * factor), factor, factor, h, w)
    return np.ascontiguousarray(t.transpose(0, 3, 1, 4, 2).reshape(c // (factor * factor), h * factor, w * factor))


def conv2d_strided(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int, padding: int) -> np.ndarray:
    """Dense strided convolution, ``weight`` is ``(out, in, k, k)``.

    Accumulation runs over input channel, then kernel row, then kernel column.
    """
    x, weight, bias = _as_f64(x), _as_f64(weight), _as_f64(bias)
    o, i, kh, kw = weight.shape
    if i != x.shape[0]:
        raise ShapeError(f"conv2d: input {x.shape} vs weight {weight.shape}")
    c, h, w = x.shape
    padded = np.zeros((c, h + 2 * padding, w + 2 * padding))
    padded[:, padding:padding + h, padding:padding + w] = x
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    out = np.empty((o, ho, wo))
    out[...] = bias[:, None, None]
    for k in range(i):
        for di in range(kh):
            for dj in range(kw):
                patch = padded[k, di:di + stride * ho:stride, dj:dj + stride * wo:stride]
                out += weight[:, k, di, dj, None, None] * patch
    return out
