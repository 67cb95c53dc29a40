"""Experiment layer: config resolution, training, fold runners, reports, gradient checks."""
from .config import PROFILES, ExperimentConfig, build_config, resolve_config
from .reports import RunReport, read_report
from .runner import ExperimentData, ablate, cross_validate, diagnose, load_fold_checkpoint, run_fold
from .trainer import EpochRecord, Predictions, predict, train_model

__all__ = [
    "EpochRecord",
    "ExperimentConfig",
    "ExperimentData",
    "PROFILES",
    "Predictions",
    "RunReport",
    "ablate",
    "build_config",
    "cross_validate",
    "diagnose",
    "load_fold_checkpoint",
    "predict",
    "read_report",
    "resolve_config",
    "run_fold",
    "train_model",
]
