"""Preparing fold data, training a model and running inference."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from autograd import Adam, Rng, Tensor, constant, no_grad
from dataset.preprocessing import DEFAULT_PIXEL_MEAN, DEFAULT_PIXEL_STD, TableStats, preprocess_image, preprocess_table
from dataset.storage import Case, Manifest
from errors import ConfigError, NonFiniteGradientError, TrainingDivergedError
from models.defusion import DeFusionNet
from models.fusion import Classifier, binary_cross_entropy

from .config import ExperimentConfig

logger = logging.getLogger(__name__)


@dataclass
class PreparedSplit:
    case_ids: list[str]
    images: np.ndarray  # (n, days, H, W)
    table: np.ndarray  # (n, N)
    labels: np.ndarray  # (n,)

    def __len__(self) -> int:
        return len(self.case_ids)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    ce: float
    recon: float
    lam: float = 0.0


@dataclass
class PretrainRecord:
    branch: str
    epoch: int
    loss: float


@dataclass
class Predictions:
    case_ids: list[str]
    probs: np.ndarray
    labels: np.ndarray
    features: Optional[dict[str, np.ndarray]] = None


def check_dataset_fits(cfg: ExperimentConfig, manifest: Manifest) -> None:
    if manifest.num_days != cfg.num_days:
        raise ConfigError(f"dataset has {manifest.num_days} days per case, config expects {cfg.num_days}")
    if manifest.num_indicators != cfg.num_indicators:
        raise ConfigError(
            f"dataset has {manifest.num_indicators} indicators, config expects {cfg.num_indicators}"
        )
    size = cfg.resize if cfg.resize is not None else manifest.image_size
    if size < cfg.image_size:
        raise ConfigError(f"dataset images ({manifest.image_size}px) cannot be cropped to {cfg.image_size}px")


def pixel_normalization(cfg: ExperimentConfig, manifest: Manifest) -> tuple[float, float]:
    if cfg.image_normalization == "dataset":
        return manifest.pixel_mean, manifest.pixel_std
    return DEFAULT_PIXEL_MEAN, DEFAULT_PIXEL_STD


def preprocess_cohort_images(cases: Sequence[Case], cfg: ExperimentConfig, manifest: Manifest) -> dict[str, np.ndarray]:
    """Selected days of every case, resized, cropped and normalised; (days, H, W) float64 each."""
    mean, std = pixel_normalization(cfg, manifest)
    resize = cfg.resize if cfg.resize is not None and cfg.resize != manifest.image_size else None
    out = {}
    for case in cases:
        frames = [
            preprocess_image(case.images[day - 1], cfg.image_size, resize=resize, mean=mean, std=std)[0]
            for day in cfg.days
        ]
        out[case.case_id] = np.stack(frames)
    return out


def build_split(
    case_ids: Sequence[str],
    cases_by_id: Mapping[str, Case],
    images: Mapping[str, np.ndarray],
    stats: TableStats,
    dtype,
) -> PreparedSplit:
    ids = list(case_ids)
    raw_table = np.stack([cases_by_id[cid].indicators for cid in ids])
    return PreparedSplit(
        case_ids=ids,
        images=np.stack([images[cid] for cid in ids]).astype(dtype),
        table=preprocess_table(raw_table, stats).astype(dtype),
        labels=np.array([cases_by_id[cid].label for cid in ids], dtype=np.int64),
    )


def _batch_inputs(model: DeFusionNet, split: PreparedSplit, index: np.ndarray) -> tuple[Optional[Tensor], Optional[Tensor]]:
    modality = model.config.modality
    images = constant(split.images[index]) if modality != "table" else None
    table = constant(split.table[index]) if modality != "image" else None
    return images, table


def train_model(
    model: DeFusionNet,
    split: PreparedSplit,
    cfg: ExperimentConfig,
    rng: Rng,
    context: Optional[dict] = None,
) -> list[EpochRecord]:
    """Joint training with one Adam group per module; returns per-epoch mean losses.

    The reconstruction weight follows ``cfg.lambda_at(epoch)``.
    """
    context = context or {}
    optimizer = Adam(
        model.parameter_groups(),
        {"image": cfg.lr_img, "table": cfg.lr_tab, "fusion": cfg.lr_fusion},
    )
    batches = rng.generator("batches")
    history: list[EpochRecord] = []
    last_good: Optional[int] = None
    n = len(split)
    for epoch in range(1, cfg.epochs + 1):
        order = batches.permutation(n)
        lam = cfg.lambda_at(epoch)
        totals = np.zeros(3)
        for start in range(0, n, cfg.batch_size):
            index = order[start : start + cfg.batch_size]
            output = model(*_batch_inputs(model, split, index))
            loss, ce = model.loss(output, split.labels[index], lam)
            loss_value = loss.item()
            if not math.isfinite(loss_value):
                logger.error("Non-finite loss in epoch %d", epoch, extra=context)
                raise TrainingDivergedError(epoch, last_good)
            optimizer.zero_grad()
            loss.backward()
            try:
                optimizer.step()
            except NonFiniteGradientError as exc:
                logger.error("Non-finite gradient for %s in epoch %d", exc.param_name, epoch, extra=context)
                raise TrainingDivergedError(epoch, last_good) from exc
            recon = output.recon.item() if output.recon is not None else 0.0
            totals += len(index) * np.array([loss_value, ce.item(), recon])
        loss_mean, ce_mean, recon_mean = (totals / n).tolist()
        history.append(EpochRecord(epoch=epoch, loss=loss_mean, ce=ce_mean, recon=recon_mean, lam=lam))
        last_good = epoch
        logger.info(
            "Epoch %d/%d L=%.4f L_ce=%.4f L_recon=%.4f lambda=%.3g",
            epoch,
            cfg.epochs,
            loss_mean,
            ce_mean,
            recon_mean,
            lam,
            extra=context,
        )
    return history


def pretrain_extractors(
    model: DeFusionNet,
    split: PreparedSplit,
    cfg: ExperimentConfig,
    rng: Rng,
    context: Optional[dict] = None,
) -> list[PretrainRecord]:
    """Staged mode: fit each extractor alone behind a throwaway head before joint training."""
    if cfg.pretrain_epochs == 0 or cfg.modality != "multimodal":
        return []
    context = context or {}
    dtype = np.dtype(cfg.dtype)
    groups = model.parameter_groups()
    records: list[PretrainRecord] = []
    for branch, width, lr in (("image", cfg.d_img, cfg.lr_img), ("table", cfg.d_tab, cfg.lr_tab)):
        head = Classifier(width, cfg.classifier_hidden, rng.generator(f"pretrain-head-{branch}")).astype(dtype)
        optimizer = Adam(
            {branch: groups[branch], "head": head.named_parameters("head.")},
            {branch: lr, "head": cfg.lr_fusion},
        )
        batches = rng.generator(f"pretrain-batches-{branch}")
        for epoch in range(1, cfg.pretrain_epochs + 1):
            order = batches.permutation(len(split))
            total = 0.0
            for start in range(0, len(split), cfg.batch_size):
                index = order[start : start + cfg.batch_size]
                if branch == "image":
                    feature = model.encode_image(constant(split.images[index]))
                else:
                    feature = model.encode_table(constant(split.table[index]))
                loss = binary_cross_entropy(head(feature), split.labels[index])
                if not math.isfinite(loss.item()):
                    raise TrainingDivergedError(epoch, epoch - 1 if epoch > 1 else None)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                total += loss.item() * len(index)
            records.append(PretrainRecord(branch=branch, epoch=epoch, loss=total / len(split)))
            logger.info("Pretrain %s epoch %d L_ce=%.4f", branch, epoch, records[-1].loss, extra=context)
    model.zero_grad()
    return records


def predict(model: DeFusionNet, split: PreparedSplit, batch_size: int = 64) -> Predictions:
    """Probabilities (and decoupled features when the model has them) in split order."""
    probs: list[np.ndarray] = []
    features: dict[str, list[np.ndarray]] = {}
    with no_grad():
        for start in range(0, len(split), batch_size):
            index = np.arange(start, min(start + batch_size, len(split)))
            output = model(*_batch_inputs(model, split, index))
            probs.append(output.probs.data.astype(np.float64))
            if output.decoupled is not None:
                for kind, values in output.decoupled.as_arrays().items():
                    features.setdefault(kind, []).append(values.astype(np.float64))
    return Predictions(
        case_ids=list(split.case_ids),
        probs=np.concatenate(probs) if probs else np.zeros(0),
        labels=split.labels.copy(),
        features={kind: np.concatenate(parts) for kind, parts in features.items()} or None,
    )
