"""Synthetic cohort generation, dataset storage, preprocessing and fold plans."""
from .folds import FoldPlan, kfold_split
from .preprocessing import (
    DEFAULT_PIXEL_MEAN,
    DEFAULT_PIXEL_STD,
    TableStats,
    fit_table_stats,
    preprocess_image,
    preprocess_table,
)
from .storage import Case, Manifest, load_dataset, read_manifest, write_dataset
from .synthetic import GeneratorSpec, generate, generate_cases

__all__ = [
    "Case",
    "FoldPlan",
    "GeneratorSpec",
    "Manifest",
    "DEFAULT_PIXEL_MEAN",
    "DEFAULT_PIXEL_STD",
    "TableStats",
    "fit_table_stats",
    "generate",
    "generate_cases",
    "kfold_split",
    "load_dataset",
    "preprocess_image",
    "preprocess_table",
    "read_manifest",
    "write_dataset",
]
