"""Table extractor: per-indicator embedding followed by a transformer encoder."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from autograd import Module, Parameter, Tensor, ops
from errors import ConfigError, ShapeError

from .layers import TransformerEncoder, TransformerLayer, xavier_uniform


@dataclass(frozen=True)
class TableExtractorConfig:
    num_indicators: int = 22
    d_model: int = 32
    heads: int = 4
    layers: int = 2
    mlp_ratio: int = 2

    def validate(self) -> None:
        if self.num_indicators < 1:
            raise ConfigError(f"at least one indicator is required, got {self.num_indicators}")
        if self.heads < 1 or self.d_model % self.heads:
            raise ConfigError(f"attention heads ({self.heads}) must divide the table dim ({self.d_model})")


class TabularEmbedding(Module):
    """Row n of the output is ``weight[n] * ta[n] + bias[n]``; one affine map per indicator."""

    def __init__(self, num_indicators: int, d_model: int, rng: np.random.Generator):
        self.num_indicators = num_indicators
        self.d_model = d_model
        self.weight = Parameter(xavier_uniform(rng, 1, d_model, (num_indicators, d_model)))
        self.bias = Parameter(np.zeros((num_indicators, d_model)))

    def forward(self, ta: Tensor) -> Tensor:
        if ta.ndim != 2 or ta.shape[1] != self.num_indicators:
            raise ShapeError("tabular_embed", ta.shape, ("B", self.num_indicators))
        batch = ta.shape[0]
        shape = (batch, self.num_indicators, self.d_model)
        values = ops.broadcast(ops.reshape(ta, (batch, self.num_indicators, 1)), shape)
        weight = ops.broadcast(ops.reshape(self.weight, (1,) + self.weight.shape), shape)
        bias = ops.broadcast(ops.reshape(self.bias, (1,) + self.bias.shape), shape)
        return ops.add(ops.mul(values, weight), bias)


class TableExtractor(Module):
    def __init__(self, config: TableExtractorConfig, rng: np.random.Generator):
        config.validate()
        self.config = config
        self.embedding = TabularEmbedding(config.num_indicators, config.d_model, rng)
        self.encoder = TransformerEncoder(config.d_model, config.heads, config.layers, rng, config.mlp_ratio)

    def forward(self, ta: Tensor, trace: Optional[dict] = None) -> tuple[Tensor, Tensor]:
        """(B, N) normalised indicators -> (sequence (B, N+1, d), f_t (B, d))."""
        sequence = self.encoder(self.embedding(ta), trace, trace_prefix="table.")
        return sequence, self.encoder.class_embedding(sequence)


def _batched(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 1:
        return ops.reshape(x, (1,) + x.shape), True
    return x, False


def tabular_embed(extractor: TableExtractor, ta: Tensor) -> Tensor:
    """(N,) -> (N, d) or (B, N) -> (B, N, d)."""
    x, squeeze = _batched(ta)
    out = extractor.embedding(x)
    return ops.reshape(out, out.shape[1:]) if squeeze else out


def table_transformer_layer(layer: TransformerLayer, tokens: Tensor, trace: Optional[dict] = None) -> Tensor:
    """(N, d) or (B, N, d) -> same shape."""
    squeeze = tokens.ndim == 2
    x = ops.reshape(tokens, (1,) + tokens.shape) if squeeze else tokens
    out = layer(x, trace)
    return ops.reshape(out, out.shape[1:]) if squeeze else out


def table_encode(extractor: TableExtractor, ta: Tensor, trace: Optional[dict] = None) -> tuple[Tensor, Tensor]:
    x, squeeze = _batched(ta)
    sequence, feature = extractor(x, trace)
    if squeeze:
        return ops.reshape(sequence, sequence.shape[1:]), ops.reshape(feature, feature.shape[1:])
    return sequence, feature
