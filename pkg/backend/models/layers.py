"""Building blocks shared by the extractors and the fusion head."""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from autograd import Module, Parameter, Tensor, ops
from errors import ConfigError


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Linear(Module):
    """Affine map over the last axis; weight stored as (in, out)."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(xavier_uniform(rng, in_features, out_features, (in_features, out_features)))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
        bias: bool = True,
    ):
        fan_in = in_channels * kernel_size * kernel_size
        limit = math.sqrt(6.0 / fan_in)
        self.stride = stride
        self.padding = padding
        self.weight = Parameter(
            rng.uniform(-limit, limit, size=(out_channels, in_channels, kernel_size, kernel_size))
        )
        self.bias = Parameter(np.zeros(out_channels)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class LayerNorm(Module):
    def __init__(self, width: int, axis: int = -1, eps: float = 1e-5):
        self.axis = axis
        self.eps = eps
        self.weight = Parameter(np.ones(width))
        self.bias = Parameter(np.zeros(width))

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.axis, self.weight, self.bias, self.eps)


class MLP(Module):
    """Stack of Linear layers with relu between them (none after the last)."""

    def __init__(self, dims: Sequence[int], rng: np.random.Generator):
        if len(dims) < 2:
            raise ConfigError(f"MLP needs at least input and output dims, got {list(dims)}")
        self.layers = [Linear(d_in, d_out, rng) for d_in, d_out in zip(dims[:-1], dims[1:])]

    def forward(self, x: Tensor) -> Tensor:
        last = len(self.layers) - 1
        for index, layer in enumerate(self.layers):
            x = layer(x)
            if index != last:
                x = ops.relu(x)
        return x


class MultiHeadSelfAttention(Module):
    def __init__(self, d_model: int, heads: int, rng: np.random.Generator):
        if heads < 1 or d_model % heads:
            raise ConfigError(f"attention heads ({heads}) must divide the model dim ({d_model})")
        self.d_model = d_model
        self.heads = heads
        self.head_dim = d_model // heads
        self.query = Linear(d_model, d_model, rng)
        self.key = Linear(d_model, d_model, rng)
        self.value = Linear(d_model, d_model, rng)
        self.out = Linear(d_model, d_model, rng)

    def _split_heads(self, x: Tensor, batch: int, length: int) -> Tensor:
        x = ops.reshape(x, (batch, length, self.heads, self.head_dim))
        return ops.transpose(x, (0, 2, 1, 3))

    def forward(self, x: Tensor, trace: Optional[dict] = None, trace_key: str = "attention") -> Tensor:
        if x.ndim != 3 or x.shape[-1] != self.d_model:
            raise ConfigError(f"attention expects (batch, length, {self.d_model}), got {x.shape}")
        batch, length, _ = x.shape
        q = self._split_heads(self.query(x), batch, length)
        k = self._split_heads(self.key(x), batch, length)
        v = self._split_heads(self.value(x), batch, length)
        scores = ops.scale(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(self.head_dim))
        weights = ops.softmax(scores, axis=-1)
        if trace is not None:
            trace[trace_key] = weights.data
        context = ops.transpose(ops.matmul(weights, v), (0, 2, 1, 3))
        return self.out(ops.reshape(context, (batch, length, self.d_model)))


class TransformerLayer(Module):
    """out1 = MHSA(x) + x; out2 = MLP(LN(out1)) + out1."""

    def __init__(self, d_model: int, heads: int, rng: np.random.Generator, mlp_ratio: int = 2):
        self.attention = MultiHeadSelfAttention(d_model, heads, rng)
        self.norm = LayerNorm(d_model)
        self.mlp = MLP([d_model, mlp_ratio * d_model, d_model], rng)

    def forward(self, x: Tensor, trace: Optional[dict] = None, trace_key: str = "attention") -> Tensor:
        out1 = ops.add(self.attention(x, trace, trace_key), x)
        return ops.add(self.mlp(self.norm(out1)), out1)


class TransformerEncoder(Module):
    """Prepends a learned class token, runs the layers, returns the full sequence."""

    def __init__(self, d_model: int, heads: int, layers: int, rng: np.random.Generator, mlp_ratio: int = 2):
        if layers < 1:
            raise ConfigError(f"transformer needs at least one layer, got {layers}")
        self.d_model = d_model
        self.class_token = Parameter(rng.normal(0.0, 0.02, size=d_model))
        self.layers = [TransformerLayer(d_model, heads, rng, mlp_ratio) for _ in range(layers)]
        self.final_norm = LayerNorm(d_model)

    def prepend_class_token(self, tokens: Tensor) -> Tensor:
        batch = tokens.shape[0]
        cls = ops.broadcast(ops.reshape(self.class_token, (1, 1, self.d_model)), (batch, 1, self.d_model))
        return ops.concat([cls, tokens], axis=1)

    def forward(self, tokens: Tensor, trace: Optional[dict] = None, trace_prefix: str = "") -> Tensor:
        x = self.prepend_class_token(tokens)
        for index, layer in enumerate(self.layers):
            x = layer(x, trace, f"{trace_prefix}layer{index}.attention")
        return self.final_norm(x)

    def class_embedding(self, sequence: Tensor) -> Tensor:
        batch = sequence.shape[0]
        return ops.reshape(ops.narrow(sequence, 1, 0, 1), (batch, self.d_model))
