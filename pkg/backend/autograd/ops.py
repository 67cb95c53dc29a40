"""Differentiable op catalog.

Every op validates shapes up front and raises ``ShapeError`` naming itself and
the offending shapes. There is no implicit broadcasting: elementwise ops need
identical shapes and ``broadcast`` is the only way to expand a tensor.
"""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from errors import ShapeError

from .tensor import Tensor, record_branch


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(op, a.shape, b.shape)


def _normalize_axis(op: str, axis: int, ndim: int, shape: Sequence[int]) -> int:
    if not -ndim <= axis < ndim:
        raise ShapeError(op, shape, detail=f"axis {axis} out of range")
    return axis % ndim


# ─── Elementwise arithmetic ──────────────────────────────────────────


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return Tensor._from_op("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return Tensor._from_op("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    a_data, b_data = a.data, b.data
    return Tensor._from_op("mul", a_data * b_data, (a, b), lambda g: (g * b_data, g * a_data))


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return Tensor._from_op("scale", a.data * factor, (a,), lambda g: (g * factor,))


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2 or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    a_data, b_data = a.data, b.data

    def _backward(g):
        return (
            np.matmul(g, np.swapaxes(b_data, -1, -2)),
            np.matmul(np.swapaxes(a_data, -1, -2), g),
        )

    return Tensor._from_op("matmul", np.matmul(a_data, b_data), (a, b), _backward)


# ─── Shape manipulation ──────────────────────────────────────────────


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat", detail="no inputs")
    first = tensors[0]
    axis = _normalize_axis("concat", axis, first.ndim, first.shape)
    for other in tensors[1:]:
        if other.ndim != first.ndim or any(
            d1 != d2 for i, (d1, d2) in enumerate(zip(first.shape, other.shape)) if i != axis
        ):
            raise ShapeError("concat", first.shape, other.shape, detail=f"axis={axis}")
    boundaries = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(g):
        return tuple(np.split(g, boundaries, axis=axis))

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._from_op("concat", data, tuple(tensors), _backward)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if math.prod(shape) != a.size or any(s < 0 for s in shape):
        raise ShapeError("reshape", a.shape, shape)
    source_shape = a.shape
    return Tensor._from_op("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(source_shape),))


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(int(x) for x in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError("transpose", a.shape, detail=f"axes={axes}")
    inverse = tuple(np.argsort(axes))
    return Tensor._from_op("transpose", np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    squeeze = tuple(i for i, size in enumerate(shape) if size == 1 and g.shape[i] != 1)
    if squeeze:
        g = g.sum(axis=squeeze, keepdims=True)
    return g


def broadcast(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        data = np.broadcast_to(a.data, shape)
    except ValueError as exc:
        raise ShapeError("broadcast", a.shape, shape) from exc
    source_shape = a.shape
    return Tensor._from_op("broadcast", np.ascontiguousarray(data), (a,), lambda g: (_unbroadcast(g, source_shape),))


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Slice ``length`` entries starting at ``start`` along ``axis``."""
    axis = _normalize_axis("narrow", axis, a.ndim, a.shape)
    if start < 0 or length < 1 or start + length > a.shape[axis]:
        raise ShapeError("narrow", a.shape, detail=f"axis={axis} start={start} length={length}")
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    source_shape, dtype = a.shape, a.dtype

    def _backward(g):
        full = np.zeros(source_shape, dtype=dtype)
        full[index] = g
        return (full,)

    return Tensor._from_op("narrow", a.data[index].copy(), (a,), _backward)


# ─── Nonlinearities ──────────────────────────────────────────────────


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    record_branch(mask)
    return Tensor._from_op("relu", np.where(mask, a.data, 0).astype(a.dtype), (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    y = expit(a.data)
    return Tensor._from_op("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


def log(a: Tensor) -> Tensor:
    x = a.data
    return Tensor._from_op("log", np.log(x), (a,), lambda g: (g / x,))


def clip(a: Tensor, low: float, high: float) -> Tensor:
    x = a.data
    inside = (x >= low) & (x <= high)
    record_branch(inside)
    return Tensor._from_op("clip", np.clip(x, low, high), (a,), lambda g: (g * inside,))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    axis = _normalize_axis("softmax", axis, a.ndim, a.shape)
    if a.shape[axis] == 0:
        raise ShapeError("softmax", a.shape, detail=f"empty axis {axis}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def _backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor._from_op("softmax", y, (a,), _backward)


# ─── Normalisation and layers ────────────────────────────────────────


def layer_norm(
    x: Tensor,
    axis: int = -1,
    weight: Optional[Tensor] = None,
    bias: Optional[Tensor] = None,
    eps: float = 1e-5,
) -> Tensor:
    """Normalise along one axis with population variance, then apply the affine map."""
    axis = _normalize_axis("layer_norm", axis, x.ndim, x.shape)
    width = x.shape[axis]
    param_shape = [1] * x.ndim
    param_shape[axis] = width
    for param in (weight, bias):
        if param is not None and param.shape != (width,):
            raise ShapeError("layer_norm", x.shape, param.shape, detail=f"axis={axis}")

    mu = x.data.mean(axis=axis, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=axis, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    w = weight.data.reshape(param_shape) if weight is not None else None
    out = xhat * w if w is not None else xhat.copy()
    if bias is not None:
        out = out + bias.data.reshape(param_shape)
    reduce_axes = tuple(i for i in range(x.ndim) if i != axis)

    def _backward(g):
        dxhat = g * w if w is not None else g
        dx = inv_std * (
            dxhat
            - dxhat.mean(axis=axis, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=axis, keepdims=True)
        )
        grads = [dx]
        if weight is not None:
            grads.append((g * xhat).sum(axis=reduce_axes))
        if bias is not None:
            grads.append(g.sum(axis=reduce_axes))
        return tuple(grads)

    parents = (x,) + tuple(p for p in (weight, bias) if p is not None)
    return Tensor._from_op("layer_norm", out, parents, _backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight + bias`` over the last axis; weight is (in, out)."""
    if weight.ndim != 2 or x.ndim < 1 or x.shape[-1] != weight.shape[0]:
        raise ShapeError("linear", x.shape, weight.shape)
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError("linear", weight.shape, bias.shape, detail="bias")
    x_data, w_data = x.data, weight.data
    out = x_data @ w_data
    if bias is not None:
        out = out + bias.data

    def _backward(g):
        g2 = g.reshape(-1, w_data.shape[1])
        x2 = x_data.reshape(-1, w_data.shape[0])
        grads = [g @ w_data.T, x2.T @ g2]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    parents = (x, weight) + ((bias,) if bias is not None else ())
    return Tensor._from_op("linear", out, parents, _backward)


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """2-D cross-correlation over (B, C, H, W) or (C, H, W) inputs; weight is (O, C, kh, kw)."""
    if x.ndim not in (3, 4) or weight.ndim != 4:
        raise ShapeError("conv2d", x.shape, weight.shape)
    batched = x.ndim == 4
    x4 = x.data if batched else x.data[None]
    n, channels, height, width = x4.shape
    out_channels, in_channels, kh, kw = weight.shape
    if in_channels != channels:
        raise ShapeError("conv2d", x.shape, weight.shape, detail="channel mismatch")
    if bias is not None and bias.shape != (out_channels,):
        raise ShapeError("conv2d", weight.shape, bias.shape, detail="bias")
    if stride < 1 or padding < 0:
        raise ShapeError("conv2d", x.shape, detail=f"stride={stride} padding={padding}")
    out_h = (height + 2 * padding - kh) // stride + 1
    out_w = (width + 2 * padding - kw) // stride + 1
    if out_h < 1 or out_w < 1:
        raise ShapeError("conv2d", x.shape, weight.shape, detail="kernel larger than padded input")

    padded = np.pad(x4, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :out_h, :out_w]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * out_h * out_w, channels * kh * kw)
    w_mat = weight.data.reshape(out_channels, -1)
    out = (cols @ w_mat.T).reshape(n, out_h, out_w, out_channels).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def _backward(g):
        g4 = g if batched else g[None]
        g2 = g4.transpose(0, 2, 3, 1).reshape(-1, out_channels)
        d_weight = (g2.T @ cols).reshape(weight.shape)
        d_cols = (g2 @ w_mat).reshape(n, out_h, out_w, channels, kh, kw)
        d_padded = np.zeros_like(padded)
        for i in range(kh):
            for j in range(kw):
                d_padded[
                    :, :, i : i + stride * (out_h - 1) + 1 : stride, j : j + stride * (out_w - 1) + 1 : stride
                ] += d_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        d_x = d_padded[:, :, padding : padding + height, padding : padding + width]
        if not batched:
            d_x = d_x[0]
        grads = [d_x, d_weight]
        if bias is not None:
            grads.append(g4.sum(axis=(0, 2, 3)))
        return tuple(grads)

    if not batched:
        out = out[0]
    parents = (x, weight) + ((bias,) if bias is not None else ())
    return Tensor._from_op("conv2d", out, parents, _backward)


def mean_pool2d(x: Tensor, kernel: int) -> Tensor:
    """Non-overlapping mean pooling over the last two axes."""
    if x.ndim < 2 or kernel < 1 or x.shape[-2] % kernel or x.shape[-1] % kernel:
        raise ShapeError("mean_pool2d", x.shape, detail=f"kernel={kernel}")
    lead, (height, width) = x.shape[:-2], x.shape[-2:]
    blocks = x.data.reshape(*lead, height // kernel, kernel, width // kernel, kernel)
    out = blocks.mean(axis=(-3, -1))
    area = float(kernel * kernel)

    def _backward(g):
        return (np.repeat(np.repeat(g, kernel, axis=-2), kernel, axis=-1) / area,)

    return Tensor._from_op("mean_pool2d", out, (x,), _backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the last two axes, kept as 1x1."""
    if x.ndim < 2:
        raise ShapeError("global_avg_pool", x.shape)
    area = float(x.shape[-2] * x.shape[-1])
    source_shape = x.shape

    def _backward(g):
        return (np.broadcast_to(g / area, source_shape).copy(),)

    return Tensor._from_op("global_avg_pool", x.data.mean(axis=(-2, -1), keepdims=True), (x,), _backward)


# ─── Reductions and distances ────────────────────────────────────────


def _expand_reduced(g: np.ndarray, shape, axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum_reduce(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    source_shape = x.shape
    data = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))

    def _backward(g):
        return (_expand_reduced(g, source_shape, axis, keepdims).copy(),)

    return Tensor._from_op("sum_reduce", data, (x,), _backward)


def mean_reduce(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    source_shape = x.shape
    data = np.asarray(x.data.mean(axis=axis, keepdims=keepdims))
    count = x.size / max(data.size, 1)

    def _backward(g):
        return (_expand_reduced(g, source_shape, axis, keepdims) / count,)

    return Tensor._from_op("mean_reduce", data, (x,), _backward)


def l1_distance(a: Tensor, b: Tensor, axis: int = -1) -> Tensor:
    """Sum of absolute differences along ``axis``."""
    _same_shape("l1_distance", a, b)
    axis = _normalize_axis("l1_distance", axis, a.ndim, a.shape)
    diff = a.data - b.data
    sign = np.sign(diff)
    record_branch(diff > 0)

    def _backward(g):
        expanded = np.expand_dims(g, axis) * sign
        return (expanded, -expanded)

    return Tensor._from_op("l1_distance", np.abs(diff).sum(axis=axis), (a, b), _backward)


OP_CATALOG = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
    "neg": neg,
    "matmul": matmul,
    "concat": concat,
    "reshape": reshape,
    "transpose": transpose,
    "broadcast": broadcast,
    "narrow": narrow,
    "relu": relu,
    "sigmoid": sigmoid,
    "log": log,
    "clip": clip,
    "softmax": softmax,
    "layer_norm": layer_norm,
    "linear": linear,
    "conv2d": conv2d,
    "mean_pool2d": mean_pool2d,
    "global_avg_pool": global_avg_pool,
    "sum_reduce": sum_reduce,
    "mean_reduce": mean_reduce,
    "l1_distance": l1_distance,
}
