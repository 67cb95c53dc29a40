"""Decoupling diagnostics: the 4x4 correlation matrix and the feature dump."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from pydantic import BaseModel

from errors import MetricError

FEATURE_KINDS = ("img_related", "tab_related", "img_unrelated", "tab_unrelated")


class PccMatrix(BaseModel):
    kinds: list[str]
    matrix: list[list[float]]
    signed: list[list[float]]
    n_samples: int

    def entry(self, a: str, b: str) -> float:
        return self.matrix[self.kinds.index(a)][self.kinds.index(b)]

    def write_json(self, path: Path) -> Path:
        Path(path).write_text(json.dumps(self.model_dump(), indent=2, sort_keys=True) + "\n")
        return Path(path)

    def write_csv(self, path: Path) -> Path:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["kind"] + self.kinds)
            for kind, row in zip(self.kinds, self.matrix):
                writer.writerow([kind] + [repr(v) for v in row])
        return Path(path)


def per_sample_correlation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pearson r across feature dims for each row; zero-variance rows give 0."""
    ac = a - a.mean(axis=1, keepdims=True)
    bc = b - b.mean(axis=1, keepdims=True)
    denom = np.sqrt((ac * ac).sum(axis=1) * (bc * bc).sum(axis=1))
    num = (ac * bc).sum(axis=1)
    safe = denom > 0
    return np.where(safe, num / np.where(safe, denom, 1.0), 0.0)


def pcc_matrix(features: Mapping[str, np.ndarray]) -> PccMatrix:
    """Mean |r| (and mean signed r) over samples for every pair of feature kinds."""
    missing = [k for k in FEATURE_KINDS if k not in features]
    if missing:
        raise MetricError(f"missing feature kinds: {missing}")
    arrays = [np.asarray(features[k], dtype=np.float64) for k in FEATURE_KINDS]
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays) or len(shape) != 2:
        raise MetricError(f"feature arrays must share one (samples, dims) shape, got {[a.shape for a in arrays]}")
    n_samples, dims = shape
    if dims < 2:
        raise MetricError(f"correlation needs at least 2 feature dims, got {dims}")
    if n_samples < 2:
        raise MetricError(f"correlation matrix needs at least 2 samples, got {n_samples}")

    size = len(FEATURE_KINDS)
    absolute = np.eye(size)
    signed = np.eye(size)
    for i in range(size):
        for j in range(i + 1, size):
            r = per_sample_correlation(arrays[i], arrays[j])
            absolute[i, j] = absolute[j, i] = float(np.abs(r).mean())
            signed[i, j] = signed[j, i] = float(r.mean())
    return PccMatrix(
        kinds=list(FEATURE_KINDS),
        matrix=absolute.tolist(),
        signed=signed.tolist(),
        n_samples=n_samples,
    )


def feature_dump(case_ids: Sequence[str], features: Mapping[str, np.ndarray], path: Path) -> Path:
    """CSV of case_id, feature_kind, dim_0..dim_{M-1}; four rows per case."""
    if len(case_ids) == 0:
        raise MetricError("feature dump needs a non-empty batch")
    arrays = {k: np.asarray(features[k], dtype=np.float64) for k in FEATURE_KINDS}
    dims = arrays[FEATURE_KINDS[0]].shape[1]
    for kind, arr in arrays.items():
        if arr.shape != (len(case_ids), dims):
            raise MetricError(f"{kind} features have shape {arr.shape}, expected {(len(case_ids), dims)}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["case_id", "feature_kind"] + [f"dim_{d}" for d in range(dims)])
        for row, case_id in enumerate(case_ids):
            for kind in FEATURE_KINDS:
                writer.writerow([case_id, kind] + [repr(float(v)) for v in arrays[kind][row]])
    return path
