"""Classification metrics and their per-fold summaries."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np
from pydantic import BaseModel
from scipy.stats import rankdata

from errors import MetricError

THRESHOLD = 0.5
METRIC_NAMES = ("auc", "f1", "accuracy")


def _as_arrays(scores: Sequence[float], labels: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise MetricError(f"{s.size} scores but {y.size} labels")
    if s.size == 0:
        raise MetricError("metrics need at least one sample")
    if not np.all((y == 0) | (y == 1)):
        raise MetricError("labels must be 0 or 1")
    return s, y.astype(np.int64)


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUC with average ranks for ties."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs both classes present")
    ranks = rankdata(s, method="average")
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def confusion(scores: Sequence[float], labels: Sequence[int], threshold: float = THRESHOLD) -> tuple[int, int, int, int]:
    """(tp, fp, fn, tn); a score equal to the threshold counts as positive."""
    s, y = _as_arrays(scores, labels)
    predicted = s >= threshold
    tp = int(np.sum(predicted & (y == 1)))
    fp = int(np.sum(predicted & (y == 0)))
    fn = int(np.sum(~predicted & (y == 1)))
    tn = int(np.sum(~predicted & (y == 0)))
    return tp, fp, fn, tn


def f1(scores: Sequence[float], labels: Sequence[int], threshold: float = THRESHOLD) -> float:
    tp, fp, fn, _ = confusion(scores, labels, threshold)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def accuracy(scores: Sequence[float], labels: Sequence[int], threshold: float = THRESHOLD) -> float:
    tp, fp, fn, tn = confusion(scores, labels, threshold)
    return (tp + tn) / (tp + fp + fn + tn)


def evaluate(scores: Sequence[float], labels: Sequence[int]) -> dict[str, float]:
    return {"auc": auc(scores, labels), "f1": f1(scores, labels), "accuracy": accuracy(scores, labels)}


class MetricSummary(BaseModel):
    folds: list[float]
    mean: float
    std: float

    @classmethod
    def from_folds(cls, values: Sequence[float]) -> "MetricSummary":
        if not values:
            raise MetricError("no fold values to summarise")
        arr = np.asarray(values, dtype=np.float64)
        if np.all(arr == arr[0]):
            return cls(folds=[float(v) for v in arr], mean=float(arr[0]), std=0.0)
        mean = float(np.clip(arr.mean(), arr.min(), arr.max()))
        return cls(folds=[float(v) for v in arr], mean=mean, std=float(arr.std()))

    def render(self) -> str:
        return f"{self.mean:.3f}({self.std:.3f})"


class MetricReport(BaseModel):
    auc: MetricSummary
    f1: MetricSummary
    accuracy: MetricSummary

    @classmethod
    def from_fold_metrics(cls, per_fold: Sequence[dict[str, float]]) -> "MetricReport":
        return cls(**{name: MetricSummary.from_folds([m[name] for m in per_fold]) for name in METRIC_NAMES})

    def write_csv(self, path: Path) -> Path:
        folds = len(self.auc.folds)
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["metric"] + [f"fold_{i}" for i in range(folds)] + ["mean", "std"])
            for name in METRIC_NAMES:
                summary: MetricSummary = getattr(self, name)
                writer.writerow([name] + [repr(v) for v in summary.folds] + [repr(summary.mean), repr(summary.std)])
        return path
