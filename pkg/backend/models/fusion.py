"""Alignment, decoupling into common/unique parts, cross-reconstruction and the classifier."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from autograd import Module, Tensor, constant, ops
from errors import ConfigError, DatasetError, ShapeError

from .layers import MLP, Linear

PROB_EPS = 1e-7


@dataclass
class AlignedFeatures:
    f_i: Tensor
    f_t: Tensor


@dataclass
class DecoupledFeatures:
    """Common (related) and unique (unrelated) parts of each modality, each (B, M)."""

    image_common: Tensor
    image_unique: Tensor
    table_common: Tensor
    table_unique: Tensor

    def as_arrays(self) -> dict[str, np.ndarray]:
        return {
            "img_related": self.image_common.data,
            "tab_related": self.table_common.data,
            "img_unrelated": self.image_unique.data,
            "tab_unrelated": self.table_unique.data,
        }


class Alignment(Module):
    """Two independent affine maps onto the shared dim d_f."""

    def __init__(self, d_img: int, d_tab: int, d_f: int, rng: np.random.Generator):
        self.image = Linear(d_img, d_f, rng)
        self.table = Linear(d_tab, d_f, rng)

    def forward(self, f_i_raw: Tensor, f_t_raw: Tensor) -> AlignedFeatures:
        return AlignedFeatures(self.image(f_i_raw), self.table(f_t_raw))


class DecouplingModule(Module):
    """One shared common encoder, two unique encoders, two cross decoders."""

    def __init__(self, d_f: int, m: int, hidden: int, rng: np.random.Generator):
        self.common = MLP([d_f, hidden, m], rng)
        self.image_unique = MLP([d_f, hidden, m], rng)
        self.table_unique = MLP([d_f, hidden, m], rng)
        self.image_decoder = MLP([2 * m, hidden, d_f], rng)
        self.table_decoder = MLP([2 * m, hidden, d_f], rng)

    def forward(self, aligned: AlignedFeatures) -> DecoupledFeatures:
        return DecoupledFeatures(
            image_common=self.common(aligned.f_i),
            image_unique=self.image_unique(aligned.f_i),
            table_common=self.common(aligned.f_t),
            table_unique=self.table_unique(aligned.f_t),
        )

    def reconstruct(self, decoupled: DecoupledFeatures) -> tuple[Tensor, Tensor]:
        """Image from (table common, image unique); table from (image common, table unique)."""
        rec_i = self.image_decoder(ops.concat([decoupled.table_common, decoupled.image_unique], axis=-1))
        rec_t = self.table_decoder(ops.concat([decoupled.image_common, decoupled.table_unique], axis=-1))
        return rec_i, rec_t


def cross_reconstruction_loss(f_i: Tensor, f_t: Tensor, rec_i: Tensor, rec_t: Tensor) -> Tensor:
    """Mean over the batch of the summed L1 errors of both reconstructions."""
    if f_i.ndim != 2 or f_i.shape[0] == 0:
        raise ShapeError("recon_loss", f_i.shape, detail="need a non-empty (B, d_f) batch")
    per_sample = ops.add(ops.l1_distance(f_i, rec_i, axis=-1), ops.l1_distance(f_t, rec_t, axis=-1))
    return ops.mean_reduce(per_sample)


class Classifier(Module):
    """Three linear layers with relu between them, then sigmoid."""

    def __init__(self, in_features: int, hidden: int, rng: np.random.Generator):
        self.mlp = MLP([in_features, hidden, hidden, 1], rng)

    def logits(self, x: Tensor) -> Tensor:
        out = self.mlp(x)
        return ops.reshape(out, (out.shape[0],))

    def forward(self, x: Tensor) -> Tensor:
        return ops.sigmoid(self.logits(x))


def validate_labels(labels: np.ndarray, batch: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (batch,):
        raise ShapeError("total_loss", labels.shape, (batch,))
    if batch == 0:
        raise ShapeError("total_loss", labels.shape, detail="empty batch")
    if not np.all((labels == 0) | (labels == 1)):
        bad = labels[(labels != 0) & (labels != 1)][0]
        raise DatasetError(f"labels must be 0 or 1, got {bad!r}")
    return labels


def binary_cross_entropy(probs: Tensor, labels: np.ndarray) -> Tensor:
    """-(1/B) sum[y log p + (1 - y) log(1 - p)] with p clamped to [1e-7, 1 - 1e-7]."""
    labels = validate_labels(labels, probs.shape[0] if probs.ndim == 1 else -1)
    dtype = probs.dtype
    y = constant(labels, dtype=dtype)
    one_minus_y = constant(1.0 - labels, dtype=dtype)
    ones = constant(np.ones(probs.shape), dtype=dtype)
    p = ops.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    log_likelihood = ops.add(ops.mul(y, ops.log(p)), ops.mul(one_minus_y, ops.log(ops.sub(ones, p))))
    return ops.neg(ops.mean_reduce(log_likelihood))


def total_loss(probs: Tensor, labels: np.ndarray, recon: Optional[Tensor], lam: float) -> tuple[Tensor, Tensor]:
    """Return (L, L_ce) with L = L_ce + lam * L_recon; with lam == 0, L is L_ce itself."""
    if not np.isfinite(lam) or lam < 0:
        raise ConfigError(f"lambda must be finite and >= 0, got {lam}")
    ce = binary_cross_entropy(probs, labels)
    if lam == 0 or recon is None:
        return ce, ce
    return ops.add(ce, ops.scale(recon, lam)), ce
