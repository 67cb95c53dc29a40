"""Image and indicator preprocessing.

Images: optional bilinear resize (corner-aligned: output pixel j samples input
coordinate j * (in - 1) / (out - 1)), centre crop with offset (R - H) // 2,
scale to [0, 1], then ``(x - mean) / std``.

Indicators: missing values take the training-fold mean, then min-max scaling
with training-fold min and max. Nothing is clipped, so held-out values outside
the training range map outside [0, 1].
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import map_coordinates

from errors import PreprocessingError

from .storage import indicator_columns

DEFAULT_PIXEL_MEAN = 0.566
DEFAULT_PIXEL_STD = math.sqrt(0.063)


def resize_bilinear(image: np.ndarray, size: int) -> np.ndarray:
    """Corner-aligned bilinear resize of a 2-D array to ``size`` x ``size``."""
    height, width = image.shape
    if (height, width) == (size, size):
        return image.astype(np.float64)
    rows = np.linspace(0.0, height - 1, size) if size > 1 else np.zeros(1)
    cols = np.linspace(0.0, width - 1, size) if size > 1 else np.zeros(1)
    grid = np.meshgrid(rows, cols, indexing="ij")
    return map_coordinates(image.astype(np.float64), grid, order=1, mode="nearest")


def center_crop(image: np.ndarray, size: int) -> np.ndarray:
    height, width = image.shape
    if height < size or width < size:
        raise PreprocessingError(f"image {height}x{width} is smaller than the {size}x{size} crop")
    top = (height - size) // 2
    left = (width - size) // 2
    return image[top : top + size, left : left + size]


def normalize_pixels(values: np.ndarray, mean: float = DEFAULT_PIXEL_MEAN, std: float = DEFAULT_PIXEL_STD) -> np.ndarray:
    return (values - mean) / std


def preprocess_image(
    raw: np.ndarray,
    crop: int,
    resize: Optional[int] = None,
    mean: float = DEFAULT_PIXEL_MEAN,
    std: float = DEFAULT_PIXEL_STD,
) -> np.ndarray:
    """8-bit (R, R) frame -> normalised float64 (1, crop, crop)."""
    if raw.ndim != 2:
        raise PreprocessingError(f"expected a single grayscale frame, got shape {raw.shape}")
    image = raw.astype(np.float64)
    if resize is not None:
        image = resize_bilinear(image, resize)
    image = center_crop(image, crop) / 255.0
    return normalize_pixels(image, mean, std)[None, :, :]


@dataclass(frozen=True)
class TableStats:
    """Per-indicator training-fold statistics plus where they came from."""

    mean: np.ndarray
    minimum: np.ndarray
    maximum: np.ndarray
    fold: Optional[int] = None
    n_train: int = 0
    train_ids_sha256: str = ""

    def to_dict(self) -> dict:
        return {
            "mean": [float(v) for v in self.mean],
            "min": [float(v) for v in self.minimum],
            "max": [float(v) for v in self.maximum],
            "provenance": {
                "fold": self.fold,
                "n_train": self.n_train,
                "train_ids_sha256": self.train_ids_sha256,
            },
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TableStats":
        provenance = raw.get("provenance", {})
        return cls(
            mean=np.asarray(raw["mean"], dtype=np.float64),
            minimum=np.asarray(raw["min"], dtype=np.float64),
            maximum=np.asarray(raw["max"], dtype=np.float64),
            fold=provenance.get("fold"),
            n_train=int(provenance.get("n_train", 0)),
            train_ids_sha256=provenance.get("train_ids_sha256", ""),
        )


def ids_digest(case_ids: Sequence[str]) -> str:
    return hashlib.sha256("\n".join(sorted(case_ids)).encode("utf-8")).hexdigest()


def fit_table_stats(
    values: np.ndarray,
    case_ids: Sequence[str] = (),
    fold: Optional[int] = None,
) -> TableStats:
    """Statistics over the (n_train, N) training matrix; NaN marks missing."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] == 0:
        raise PreprocessingError(f"need a non-empty (cases, indicators) matrix, got shape {values.shape}")
    observed = ~np.isnan(values)
    empty = np.flatnonzero(~observed.any(axis=0))
    if empty.size:
        names = indicator_columns(values.shape[1])
        raise PreprocessingError(
            f"indicator {names[empty[0]]} has no observed value in the training fold"
        )
    return TableStats(
        mean=np.nanmean(values, axis=0),
        minimum=np.nanmin(values, axis=0),
        maximum=np.nanmax(values, axis=0),
        fold=fold,
        n_train=int(values.shape[0]),
        train_ids_sha256=ids_digest(case_ids) if len(case_ids) else "",
    )


def preprocess_table(values: np.ndarray, stats: TableStats) -> np.ndarray:
    """Impute with the training mean, then min-max scale; constant indicators map to 0.5."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != stats.mean.shape[0]:
        raise PreprocessingError(
            f"expected {stats.mean.shape[0]} indicators, got {values.shape[-1]}"
        )
    filled = np.where(np.isnan(values), stats.mean, values)
    span = stats.maximum - stats.minimum
    constant = span == 0
    scaled = (filled - stats.minimum) / np.where(constant, 1.0, span)
    return np.where(constant, 0.5, scaled)
