"""Run reports: report.json (reproducible), timing.json (wall clock, host)."""
from __future__ import annotations

import csv
import json
import platform
from pathlib import Path
from typing import Any, Optional, Sequence

import psutil
from pydantic import BaseModel, Field

from evaluation.diagnostics import PccMatrix
from evaluation.metrics import METRIC_NAMES, MetricReport
from version import VERSION

from .config import ExperimentConfig
from .trainer import EpochRecord, PretrainRecord

REPORT_FILE = "report.json"
TIMING_FILE = "timing.json"


class EpochLog(BaseModel):
    epoch: int
    loss: float
    ce: float
    recon: float


class PretrainLog(BaseModel):
    branch: str
    epoch: int
    loss: float


class FoldLog(BaseModel):
    fold: int
    n_train: int
    n_test: int
    metrics: dict[str, float]
    table_stats: dict[str, Any] = Field(description="Provenance of the train-fold indicator statistics")
    epochs: list[EpochLog]
    pretrain: list[PretrainLog] = Field(default_factory=list)

    @classmethod
    def build(
        cls,
        fold: int,
        n_train: int,
        n_test: int,
        metrics: dict[str, float],
        provenance: dict[str, Any],
        history: Sequence[EpochRecord],
        pretrain: Sequence[PretrainRecord] = (),
    ) -> "FoldLog":
        return cls(
            fold=fold,
            n_train=n_train,
            n_test=n_test,
            metrics=dict(metrics),
            table_stats=provenance,
            epochs=[EpochLog(epoch=r.epoch, loss=r.loss, ce=r.ce, recon=r.recon) for r in history],
            pretrain=[PretrainLog(branch=r.branch, epoch=r.epoch, loss=r.loss) for r in pretrain],
        )


class VariantLog(BaseModel):
    name: str
    label: str
    group: str
    overrides: dict[str, Any]
    config_digest: str
    metrics: MetricReport


class RunReport(BaseModel):
    command: str
    version: str = VERSION
    seed: int
    config: dict[str, Any]
    config_digest: str
    folds: list[FoldLog] = Field(default_factory=list)
    metrics: Optional[MetricReport] = None
    pcc: Optional[PccMatrix] = None
    variants: list[VariantLog] = Field(default_factory=list)
    artifacts: dict[str, str] = Field(default_factory=dict)
    notes: list[str] = Field(default_factory=list)

    @classmethod
    def for_config(cls, command: str, cfg: ExperimentConfig, **fields: Any) -> "RunReport":
        return cls(command=command, seed=cfg.seed, config=cfg.to_json_dict(), config_digest=cfg.digest(), **fields)

    def write(self, directory: Path) -> Path:
        path = Path(directory) / REPORT_FILE
        path.write_text(json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
        return path


def read_report(path: Path) -> RunReport:
    return RunReport.model_validate_json(Path(path).read_text())


def write_timing(directory: Path, seconds: float, workers: int, extra: Optional[dict[str, Any]] = None) -> Path:
    payload = {
        "wall_clock_seconds": round(seconds, 3),
        "workers": workers,
        "python": platform.python_version(),
        "platform": platform.platform(),
        "physical_cores": psutil.cpu_count(logical=False),
        "memory_gb": round(psutil.virtual_memory().total / (1024**3), 1),
        **(extra or {}),
    }
    path = Path(directory) / TIMING_FILE
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def write_ablation_table(directory: Path, variants: Sequence[VariantLog]) -> tuple[Path, Path]:
    """ablation.csv (one row per variant, mean(std) per metric) plus its JSON twin."""
    directory = Path(directory)
    csv_path = directory / "ablation.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        header = ["variant", "label", "group"]
        for name in METRIC_NAMES:
            header += [f"{name}_mean", f"{name}_std", name]
        writer.writerow(header)
        for variant in variants:
            row = [variant.name, variant.label, variant.group]
            for name in METRIC_NAMES:
                summary = getattr(variant.metrics, name)
                row += [repr(summary.mean), repr(summary.std), summary.render()]
            writer.writerow(row)
    json_path = directory / "ablation.json"
    json_path.write_text(
        json.dumps([v.model_dump(mode="json") for v in variants], indent=2, sort_keys=True) + "\n"
    )
    return csv_path, json_path


def decoupling_note(generator: dict[str, Any], pcc: Optional[PccMatrix]) -> Optional[str]:
    """Explain whether the related/unrelated correlation gap is expected for this cohort."""
    if pcc is None:
        return None
    gap = pcc.entry("img_related", "tab_related") - pcc.entry("img_unrelated", "tab_unrelated")
    strength = float(generator.get("shared_signal_strength", 1.0))
    if strength == 0.0:
        return (
            f"shared_signal_strength is 0: no related/unrelated gap is expected (observed gap {gap:.3f})"
        )
    return f"related minus unrelated correlation gap {gap:.3f} at shared_signal_strength {strength}"
