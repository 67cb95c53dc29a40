"""Temporal image extractor: residual CNN backbone, position encodings, transformer.

Each day's image goes through the same backbone. The resulting feature maps
become tokens, receive a position encoding and are concatenated day after
day behind a learned class token. The class token's final embedding is the
image feature ``f_i``.

Spatial-temporal position encoding (``pe="stpe"``), per day i:
    PE_s^i  = Conv3x3(im_i)                      spatial, same shape as the map
    PE_te^i = GAP(im_i) + PE_te^(i-1)            cumulative pooled sum, C x 1 x 1
    PE_t^i  = PE_te^i replicated over positions
    PE_att  = softmax over [chanmean(PE_s), chanmean(PE_t)] per position
    PE^i    = PE_att[:, 0] * PE_s + PE_att[:, 1] * PE_t
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from autograd import Module, Parameter, Tensor, constant, ops
from errors import ConfigError, ShapeError

from .layers import Conv2d, LayerNorm, Linear, TransformerEncoder

logger = logging.getLogger(__name__)

PE_VARIANTS = ("none", "sincos", "learnable", "stpe", "stpe_no_spe", "stpe_no_tpe", "stpe_no_att")


@dataclass(frozen=True)
class ImageExtractorConfig:
    image_size: int = 32
    num_days: int = 3
    stride: int = 8
    channels: int = 32
    res_blocks: int = 2
    d_model: int = 32
    heads: int = 4
    layers: int = 2
    mlp_ratio: int = 2
    pe: str = "stpe"

    @property
    def map_size(self) -> int:
        return self.image_size // self.stride

    @property
    def tokens_per_day(self) -> int:
        return self.map_size * self.map_size

    @property
    def sequence_length(self) -> int:
        return 1 + self.num_days * self.tokens_per_day

    def validate(self) -> None:
        if self.pe not in PE_VARIANTS:
            raise ConfigError(f"unknown position encoding '{self.pe}'; valid: {', '.join(PE_VARIANTS)}")
        if self.stride < 1 or self.stride & (self.stride - 1):
            raise ConfigError(f"backbone stride must be a power of two, got {self.stride}")
        if self.image_size % self.stride:
            raise ConfigError(f"image size {self.image_size} is not divisible by the backbone stride {self.stride}")
        if self.num_days < 1:
            raise ConfigError("at least one day of images is required")
        if self.channels < 1 or self.res_blocks < 0:
            raise ConfigError(f"invalid backbone shape: channels={self.channels} res_blocks={self.res_blocks}")


# ─── Backbone ────────────────────────────────────────────────────────


class ResidualBlock(Module):
    """conv3x3 - LN - relu - conv3x3 - LN, plus skip, then relu."""

    def __init__(self, channels: int, stride: int, rng: np.random.Generator):
        self.conv1 = Conv2d(channels, channels, 3, rng, stride=stride, padding=1)
        self.norm1 = LayerNorm(channels, axis=1)
        self.conv2 = Conv2d(channels, channels, 3, rng, stride=1, padding=1)
        self.norm2 = LayerNorm(channels, axis=1)
        self.skip = Conv2d(channels, channels, 1, rng, stride=stride) if stride > 1 else None

    def forward(self, x: Tensor) -> Tensor:
        h = ops.relu(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        skip = self.skip(x) if self.skip is not None else x
        return ops.relu(ops.add(h, skip))


class Backbone(Module):
    """Stem conv plus residual blocks with total stride ``stride``.

    The stem halves the resolution, blocks halve it while downsampling
    remains, and whatever factor is left after that is taken by a mean-pool
    right after the stem.
    """

    def __init__(self, channels: int, stride: int, res_blocks: int, rng: np.random.Generator):
        stages = int(round(math.log2(stride)))
        stem_stride = 2 if stages >= 1 else 1
        remaining = max(stages - 1, 0)
        strided_blocks = min(remaining, res_blocks)
        self.pool_kernel = 2 ** (remaining - strided_blocks)
        self.stem = Conv2d(1, channels, 3, rng, stride=stem_stride, padding=1)
        self.stem_norm = LayerNorm(channels, axis=1)
        self.blocks = [
            ResidualBlock(channels, 2 if index < strided_blocks else 1, rng) for index in range(res_blocks)
        ]

    def forward(self, images: Tensor) -> Tensor:
        x = ops.relu(self.stem_norm(self.stem(images)))
        if self.pool_kernel > 1:
            x = ops.mean_pool2d(x, self.pool_kernel)
        for block in self.blocks:
            x = block(x)
        return x


# ─── Position encodings ──────────────────────────────────────────────


def sincos_table(length: int, width: int) -> np.ndarray:
    positions = np.arange(length, dtype=np.float64)[:, None]
    dims = np.arange(width, dtype=np.float64)[None, :]
    angles = positions / np.power(10000.0, (2 * (dims // 2)) / width)
    table = np.empty((length, width))
    table[:, 0::2] = np.sin(angles[:, 0::2])
    table[:, 1::2] = np.cos(angles[:, 1::2])
    return table


def to_tokens(feature_map: Tensor) -> Tensor:
    """(B, C, h, w) -> (B, h*w, C)."""
    batch, channels, height, width = feature_map.shape
    flat = ops.reshape(feature_map, (batch, channels, height * width))
    return ops.transpose(flat, (0, 2, 1))


def temporal_encodings(maps: Sequence[Tensor]) -> list[Tensor]:
    """PE_te^i = GAP(map_i) + PE_te^(i-1), each (B, C, 1, 1)."""
    if not maps:
        raise ShapeError("temporal_pe", detail="no feature maps")
    encodings: list[Tensor] = []
    for feature_map in maps:
        pooled = ops.global_avg_pool(feature_map)
        encodings.append(pooled if not encodings else ops.add(pooled, encodings[-1]))
    return encodings


def attention_weights(pe_s: Tensor, pe_t: Tensor) -> Tensor:
    """(B, C, h, w) pair -> (B, h*w, 2) softmax weights over channel means."""
    if pe_s.shape != pe_t.shape:
        raise ShapeError("pe_attention", pe_s.shape, pe_t.shape)
    batch, _, height, width = pe_s.shape
    a = ops.reshape(ops.mean_reduce(pe_s, axis=1), (batch, height * width, 1))
    b = ops.reshape(ops.mean_reduce(pe_t, axis=1), (batch, height * width, 1))
    return ops.softmax(ops.concat([a, b], axis=2), axis=2)


def combine_position_encodings(pe_s: Tensor, pe_t: Tensor, weights: Tensor) -> Tensor:
    """Weighted per-position mix; returns tokens (B, h*w, C)."""
    if pe_s.shape != pe_t.shape:
        raise ShapeError("pe_attention", pe_s.shape, pe_t.shape)
    s_tokens, t_tokens = to_tokens(pe_s), to_tokens(pe_t)
    if weights.shape != s_tokens.shape[:2] + (2,):
        raise ShapeError("pe_attention", weights.shape, s_tokens.shape)
    w_s = ops.broadcast(ops.narrow(weights, 2, 0, 1), s_tokens.shape)
    w_t = ops.broadcast(ops.narrow(weights, 2, 1, 1), t_tokens.shape)
    return ops.add(ops.mul(w_s, s_tokens), ops.mul(w_t, t_tokens))


class ImageExtractor(Module):
    def __init__(self, config: ImageExtractorConfig, rng: np.random.Generator):
        config.validate()
        self.config = config
        self.backbone = Backbone(config.channels, config.stride, config.res_blocks, rng)
        self.spe = (
            Conv2d(config.channels, config.channels, 3, rng, stride=1, padding=1)
            if config.pe in ("stpe", "stpe_no_tpe", "stpe_no_att")
            else None
        )
        self.learned_pe = (
            Parameter(rng.normal(0.0, 0.02, size=(config.num_days * config.tokens_per_day, config.channels)))
            if config.pe == "learnable"
            else None
        )
        self.projection = Linear(config.channels, config.d_model, rng) if config.channels != config.d_model else None
        self.encoder = TransformerEncoder(config.d_model, config.heads, config.layers, rng, config.mlp_ratio)

    def feature_maps(self, images: Tensor) -> list[Tensor]:
        """(B, T, H, W) -> T maps of shape (B, C, h, w)."""
        cfg = self.config
        if images.ndim != 4 or images.shape[1:] != (cfg.num_days, cfg.image_size, cfg.image_size):
            raise ShapeError(
                "image_encode",
                images.shape,
                ("B", cfg.num_days, cfg.image_size, cfg.image_size),
            )
        batch = images.shape[0]
        stacked = ops.reshape(images, (batch * cfg.num_days, 1, cfg.image_size, cfg.image_size))
        maps = self.backbone(stacked)
        _, channels, height, width = maps.shape
        maps = ops.reshape(maps, (batch, cfg.num_days, channels, height, width))
        return [
            ops.reshape(ops.narrow(maps, 1, day, 1), (batch, channels, height, width))
            for day in range(cfg.num_days)
        ]

    def day_position_encodings(self, maps: Sequence[Tensor], trace: Optional[dict] = None) -> list[Tensor]:
        """Per-day PE tokens (B, h*w, C) for the STPE family of variants."""
        pe = self.config.pe
        temporal = temporal_encodings(maps) if pe != "stpe_no_tpe" else [None] * len(maps)
        encodings = []
        for day, (feature_map, te) in enumerate(zip(maps, temporal)):
            pe_s = self.spe(feature_map) if self.spe is not None else None
            pe_t = ops.broadcast(te, feature_map.shape) if te is not None else None
            if pe == "stpe_no_spe":
                encodings.append(to_tokens(pe_t))
            elif pe == "stpe_no_tpe":
                encodings.append(to_tokens(pe_s))
            elif pe == "stpe_no_att":
                encodings.append(ops.add(to_tokens(pe_s), to_tokens(pe_t)))
            else:
                weights = attention_weights(pe_s, pe_t)
                if trace is not None:
                    trace[f"pe_att.day{day + 1}"] = weights.data
                encodings.append(combine_position_encodings(pe_s, pe_t, weights))
        return encodings

    def tokens(self, images: Tensor, trace: Optional[dict] = None) -> Tensor:
        """Position-encoded image tokens (B, T*h*w, d_model), before the class token."""
        maps = self.feature_maps(images)
        day_tokens = [to_tokens(m) for m in maps]
        pe = self.config.pe
        if pe.startswith("stpe"):
            encodings = self.day_position_encodings(maps, trace)
            day_tokens = [ops.add(tok, enc) for tok, enc in zip(day_tokens, encodings)]
        sequence = ops.concat(day_tokens, axis=1)
        if pe in ("sincos", "learnable"):
            table = self.learned_pe if pe == "learnable" else constant(
                sincos_table(sequence.shape[1], sequence.shape[2]), dtype=sequence.dtype
            )
            sequence = ops.add(sequence, ops.broadcast(ops.reshape(table, (1,) + table.shape), sequence.shape))
        if self.projection is not None:
            sequence = self.projection(sequence)
        return sequence

    def forward(self, images: Tensor, trace: Optional[dict] = None) -> tuple[Tensor, Tensor]:
        """Return (encoded sequence incl. class token, f_i of shape (B, d_model))."""
        sequence = self.encoder(self.tokens(images, trace), trace, trace_prefix="image.")
        return sequence, self.encoder.class_embedding(sequence)


# ─── Single-sample entry points ──────────────────────────────────────


def _batched(x: Tensor, ndim: int) -> tuple[Tensor, bool]:
    if x.ndim == ndim - 1:
        return ops.reshape(x, (1,) + x.shape), True
    return x, False


def backbone_forward(extractor: ImageExtractor, image: Tensor) -> Tensor:
    """(1, H, W) or (B, 1, H, W) image -> (C, h, w) or (B, C, h, w) feature map."""
    x, squeeze = _batched(image, 4)
    out = extractor.backbone(x)
    return ops.reshape(out, out.shape[1:]) if squeeze else out


def spatial_pe(extractor: ImageExtractor, feature_map: Tensor) -> Tensor:
    if extractor.spe is None:
        raise ConfigError(f"position encoding '{extractor.config.pe}' has no spatial branch")
    return extractor.spe(feature_map)


def temporal_pe(maps: Sequence[Tensor]) -> list[Tensor]:
    """Unbatched (C, h, w) or batched (B, C, h, w) maps -> cumulative pooled encodings."""
    if not maps:
        raise ShapeError("temporal_pe", detail="no feature maps")
    return temporal_encodings(list(maps))


def pe_attention(pe_s: Tensor, pe_t: Tensor) -> tuple[Tensor, Tensor]:
    """Return (PE_att, PE); (h*w, 2) and (h*w, C) for unbatched input."""
    if pe_s.shape != pe_t.shape:
        raise ShapeError("pe_attention", pe_s.shape, pe_t.shape)
    s, squeeze = _batched(pe_s, 4)
    t, _ = _batched(pe_t, 4)
    weights = attention_weights(s, t)
    pe = combine_position_encodings(s, t, weights)
    if squeeze:
        return ops.reshape(weights, weights.shape[1:]), ops.reshape(pe, pe.shape[1:])
    return weights, pe


def image_encode(extractor: ImageExtractor, images: Tensor, trace: Optional[dict] = None) -> tuple[Tensor, Tensor]:
    """(T, H, W) or (B, T, H, W) images -> (token sequence, f_i)."""
    x, squeeze = _batched(images, 4)
    sequence, feature = extractor(x, trace)
    if squeeze:
        return ops.reshape(sequence, sequence.shape[1:]), ops.reshape(feature, feature.shape[1:])
    return sequence, feature
