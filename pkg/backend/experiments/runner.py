"""Fold jobs, cross-validation, ablation grids and checkpoint diagnostics."""
from __future__ import annotations

import logging
import threading
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import psutil

from autograd import Rng, load_checkpoint, save_checkpoint
from autograd.checkpoint import metadata_json
from dataset.folds import FoldPlan, kfold_split
from dataset.preprocessing import TableStats, fit_table_stats
from dataset.storage import Case, Manifest, load_dataset, read_manifest
from errors import ConfigError, FoldFailedError
from evaluation.diagnostics import PccMatrix, pcc_matrix
from evaluation.metrics import MetricReport, evaluate
from logging_setup import run_context
from models.defusion import DeFusionNet
from models.registry import VariantInfo

from .config import ExperimentConfig, build_config
from .trainer import (
    EpochRecord,
    Predictions,
    PretrainRecord,
    build_split,
    check_dataset_fits,
    predict,
    preprocess_cohort_images,
    pretrain_extractors,
    train_model,
)

logger = logging.getLogger(__name__)


def default_workers(jobs: int) -> int:
    cores = psutil.cpu_count(logical=False) or psutil.cpu_count() or 1
    return max(1, min(cores, jobs))


class ExperimentData:
    """Read-only cohort shared by every fold job of a run."""

    def __init__(self, cases: list[Case], manifest: Manifest):
        self.cases = cases
        self.manifest = manifest
        self.by_id = {case.case_id: case for case in cases}
        self._images: dict[tuple, dict[str, np.ndarray]] = {}
        self._lock = threading.Lock()

    @classmethod
    def load(cls, directory: Path, workers: Optional[int] = None) -> "ExperimentData":
        manifest = read_manifest(directory)
        return cls(load_dataset(directory, workers=workers), manifest)

    def plan(self, cfg: ExperimentConfig) -> FoldPlan:
        return kfold_split(
            [c.case_id for c in self.cases],
            [c.label for c in self.cases],
            cfg.k,
            cfg.seed,
            stratified=cfg.stratified,
        )

    def images_for(self, cfg: ExperimentConfig) -> dict[str, np.ndarray]:
        key = (cfg.days, cfg.image_size, cfg.resize, cfg.image_normalization)
        with self._lock:
            if key not in self._images:
                self._images[key] = preprocess_cohort_images(self.cases, cfg, self.manifest)
            return self._images[key]

    def table_stats(self, train_ids: Sequence[str], fold: Optional[int]) -> TableStats:
        values = np.stack([self.by_id[cid].indicators for cid in train_ids])
        return fit_table_stats(values, train_ids, fold)


@dataclass
class FoldOutcome:
    fold: int
    metrics: dict[str, float]
    history: list[EpochRecord]
    pretrain: list[PretrainRecord]
    stats: TableStats
    predictions: Predictions
    model: DeFusionNet = field(repr=False)
    n_train: int = 0


def build_model(cfg: ExperimentConfig, rng: Rng) -> DeFusionNet:
    return DeFusionNet(cfg.model(), rng.generator("init")).astype(np.dtype(cfg.dtype))


def run_fold(cfg: ExperimentConfig, data: ExperimentData, fold: int, run_id: str = "-") -> FoldOutcome:
    """Fit stats on the training folds, train, evaluate on the held-out fold."""
    check_dataset_fits(cfg, data.manifest)
    context = run_context(run_id, fold)
    plan = data.plan(cfg)
    train_ids, test_ids = plan.train_ids(fold), plan.test_ids(fold)
    stats = data.table_stats(train_ids, fold)
    images = data.images_for(cfg)
    dtype = np.dtype(cfg.dtype)
    train_split = build_split(train_ids, data.by_id, images, stats, dtype)
    test_split = build_split(test_ids, data.by_id, images, stats, dtype)
    logger.info("Fold %d: %d train / %d test cases", fold, len(train_split), len(test_split), extra=context)

    rng = Rng(cfg.seed).derive(fold)
    model = build_model(cfg, rng)
    pretrain = pretrain_extractors(model, train_split, cfg, rng, context)
    history = train_model(model, train_split, cfg, rng, context)
    predictions = predict(model, test_split)
    metrics = evaluate(predictions.probs, predictions.labels)
    logger.info(
        "Fold %d done: AUC=%.4f F1=%.4f ACC=%.4f",
        fold,
        metrics["auc"],
        metrics["f1"],
        metrics["accuracy"],
        extra=context,
    )
    return FoldOutcome(
        fold=fold,
        metrics=metrics,
        history=history,
        pretrain=pretrain,
        stats=stats,
        predictions=predictions,
        model=model,
        n_train=len(train_split),
    )


def _run_jobs(jobs: list[tuple[ExperimentConfig, int]], data: ExperimentData, workers: Optional[int], run_id: str):
    """Run (config, fold) jobs on a thread pool; results come back in job order."""
    workers = workers or default_workers(len(jobs))
    results: list[Optional[FoldOutcome]] = [None] * len(jobs)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(run_fold, cfg, data, fold, run_id): (i, fold) for i, (cfg, fold) in enumerate(jobs)}
        done, pending = wait(futures, return_when=FIRST_EXCEPTION)
        for future in pending:
            future.cancel()
        for future in sorted(done, key=lambda f: futures[f][0]):
            index, fold = futures[future]
            exc = future.exception()
            if exc is not None:
                raise FoldFailedError(fold, exc) from exc
            results[index] = future.result()
    if any(r is None for r in results):
        raise FoldFailedError(-1, RuntimeError("fold jobs were cancelled"))
    return results


def cross_validate(
    cfg: ExperimentConfig,
    data: ExperimentData,
    workers: Optional[int] = None,
    run_id: str = "-",
) -> list[FoldOutcome]:
    return _run_jobs([(cfg, fold) for fold in range(cfg.k)], data, workers, run_id)


def pooled_features(outcomes: Sequence[FoldOutcome]) -> Optional[tuple[list[str], dict[str, np.ndarray]]]:
    """Held-out decoupled features of all folds, ordered by case id."""
    if not outcomes or any(o.predictions.features is None for o in outcomes):
        return None
    ids = [cid for o in outcomes for cid in o.predictions.case_ids]
    kinds = outcomes[0].predictions.features.keys()
    stacked = {k: np.concatenate([o.predictions.features[k] for o in outcomes]) for k in kinds}
    order = np.argsort(np.array(ids), kind="stable")
    return [ids[i] for i in order], {k: v[order] for k, v in stacked.items()}


def summarize(outcomes: Sequence[FoldOutcome]) -> MetricReport:
    return MetricReport.from_fold_metrics([o.metrics for o in outcomes])


@dataclass
class AblationRow:
    variant: VariantInfo
    config: ExperimentConfig
    outcomes: list[FoldOutcome]

    @property
    def report(self) -> MetricReport:
        return summarize(self.outcomes)


def ablate(
    base: ExperimentConfig,
    variants: Sequence[VariantInfo],
    data: ExperimentData,
    workers: Optional[int] = None,
    run_id: str = "-",
) -> list[AblationRow]:
    """Every variant under the base seed and fold plan; grid cells and folds share one pool."""
    if not variants:
        raise ConfigError("ablation grid is empty")
    configs = [base.with_overrides(**variant.override_dict()) for variant in variants]
    jobs = [(cfg, fold) for cfg in configs for fold in range(cfg.k)]
    results = _run_jobs(jobs, data, workers, run_id)
    rows = []
    start = 0
    for variant, cfg in zip(variants, configs):
        rows.append(AblationRow(variant=variant, config=cfg, outcomes=results[start : start + cfg.k]))
        start += cfg.k
    return rows


# ─── Checkpoints ─────────────────────────────────────────────────────


def save_fold_checkpoint(path: Path, cfg: ExperimentConfig, outcome: FoldOutcome) -> Path:
    return save_checkpoint(
        path,
        outcome.model.state_dict(),
        metadata={
            "config": cfg.to_json_dict(),
            "table_stats": outcome.stats.to_dict(),
            "holdout_fold": outcome.fold,
        },
    )


@dataclass
class LoadedCheckpoint:
    config: ExperimentConfig
    stats: TableStats
    holdout_fold: int
    model: DeFusionNet


def load_fold_checkpoint(path: Path) -> LoadedCheckpoint:
    state, metadata = load_checkpoint(path)
    cfg = build_config(metadata_json(metadata, "config"))
    stats = TableStats.from_dict(metadata_json(metadata, "table_stats"))
    holdout = int(metadata_json(metadata, "holdout_fold"))
    model = build_model(cfg, Rng(cfg.seed).derive(holdout))
    model.load_state_dict(state)
    return LoadedCheckpoint(config=cfg, stats=stats, holdout_fold=holdout, model=model)


@dataclass
class Diagnosis:
    pcc: PccMatrix
    predictions: Predictions
    metrics: dict[str, float]


def diagnose(checkpoint: LoadedCheckpoint, data: ExperimentData) -> Diagnosis:
    """Forward the checkpoint's held-out fold and compute the correlation matrix."""
    cfg = checkpoint.config
    check_dataset_fits(cfg, data.manifest)
    if not cfg.model().uses_reconstruction:
        raise ConfigError(f"diagnose needs a decoupling model, checkpoint uses fusion '{cfg.fusion}'")
    test_ids = data.plan(cfg).test_ids(checkpoint.holdout_fold)
    split = build_split(test_ids, data.by_id, data.images_for(cfg), checkpoint.stats, np.dtype(cfg.dtype))
    predictions = predict(checkpoint.model, split)
    return Diagnosis(
        pcc=pcc_matrix(predictions.features),
        predictions=predictions,
        metrics=evaluate(predictions.probs, predictions.labels),
    )
