"""On-disk dataset layout.

    <dir>/manifest.json           version, n_cases, num_days, num_indicators, image_size, pixel stats
    <dir>/cases.csv               case_id,label,ind_00..ind_{N-1}; empty cell = missing
    <dir>/images/<case>_d<k>.pgm  binary 8-bit PGM (P5), one file per day

Floats are written with ``repr`` so a write/read cycle is bit-exact.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from errors import DatasetError

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"
CASES_NAME = "cases.csv"
IMAGES_DIR = "images"


@dataclass
class Case:
    case_id: str
    images: np.ndarray  # (T, H, W) uint8
    indicators: np.ndarray  # (N,) float64, NaN = missing
    label: int

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.indicators)


@dataclass(frozen=True)
class Manifest:
    version: int
    n_cases: int
    num_days: int
    num_indicators: int
    image_size: int
    pixel_mean: float
    pixel_std: float
    generator: Optional[dict] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "n_cases": self.n_cases,
            "num_days": self.num_days,
            "num_indicators": self.num_indicators,
            "image_size": self.image_size,
            "pixel_mean": self.pixel_mean,
            "pixel_std": self.pixel_std,
            "generator": self.generator,
        }


def indicator_columns(num_indicators: int) -> list[str]:
    return [f"ind_{index:02d}" for index in range(num_indicators)]


def image_path(directory: Path, case_id: str, day: int) -> Path:
    return directory / IMAGES_DIR / f"{case_id}_d{day}.pgm"


def _format_value(value: float) -> str:
    return "" if np.isnan(value) else repr(float(value))


def write_pgm(path: Path, frame: np.ndarray) -> None:
    Image.fromarray(np.ascontiguousarray(frame, dtype=np.uint8)).save(path, format="PPM")


def read_pgm(path: Path, case_id: Optional[str] = None) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.format != "PPM" or img.mode != "L":
                raise DatasetError(
                    f"{path.name} is not an 8-bit grayscale PGM (format={img.format}, mode={img.mode})",
                    case_id=case_id,
                    path=str(path),
                )
            return np.asarray(img, dtype=np.uint8).copy()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DatasetError(f"cannot decode {path.name}: {exc}", case_id=case_id, path=str(path)) from exc


def write_dataset(
    directory: Path,
    cases: list[Case],
    generator: Optional[dict] = None,
    workers: Optional[int] = None,
) -> Path:
    if not cases:
        raise DatasetError("refusing to write an empty dataset")
    directory = Path(directory)
    try:
        (directory / IMAGES_DIR).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create dataset directory: {exc}", path=str(directory)) from exc

    num_days, height, width = cases[0].images.shape
    num_indicators = cases[0].indicators.shape[0]

    def _write_images(case: Case) -> None:
        for day in range(num_days):
            write_pgm(image_path(directory, case.case_id, day + 1), case.images[day])

    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(_write_images, cases))

    with open(directory / CASES_NAME, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["case_id", "label"] + indicator_columns(num_indicators))
        for case in cases:
            writer.writerow([case.case_id, str(int(case.label))] + [_format_value(v) for v in case.indicators])

    pixels = np.stack([c.images for c in cases]).astype(np.float64) / 255.0
    manifest = Manifest(
        version=MANIFEST_VERSION,
        n_cases=len(cases),
        num_days=num_days,
        num_indicators=num_indicators,
        image_size=height,
        pixel_mean=float(pixels.mean()),
        pixel_std=float(pixels.std()),
        generator=generator,
    )
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    logger.info("Wrote %d cases to %s", len(cases), directory)
    return directory


def read_manifest(directory: Path) -> Manifest:
    path = Path(directory) / MANIFEST_NAME
    if not path.is_file():
        raise DatasetError("manifest.json not found", path=str(path))
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"manifest.json is not valid JSON: {exc}", path=str(path)) from exc
    version = raw.get("version")
    if version != MANIFEST_VERSION:
        raise DatasetError(f"unsupported manifest version {version!r} (expected {MANIFEST_VERSION})", path=str(path))
    try:
        return Manifest(
            version=version,
            n_cases=int(raw["n_cases"]),
            num_days=int(raw["num_days"]),
            num_indicators=int(raw["num_indicators"]),
            image_size=int(raw["image_size"]),
            pixel_mean=float(raw["pixel_mean"]),
            pixel_std=float(raw["pixel_std"]),
            generator=raw.get("generator"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"manifest.json is missing or has a bad field: {exc}", path=str(path)) from exc


def _parse_row(row: dict, columns: list[str], line: int) -> tuple[str, int, np.ndarray]:
    case_id = (row.get("case_id") or "").strip()
    if not case_id:
        raise DatasetError(f"cases.csv line {line}: empty case_id")
    raw_label = (row.get("label") or "").strip()
    if raw_label not in ("0", "1"):
        raise DatasetError(f"label must be 0 or 1, got {raw_label!r}", case_id=case_id)
    values = np.empty(len(columns))
    for index, column in enumerate(columns):
        cell = (row.get(column) or "").strip()
        try:
            values[index] = float(cell) if cell else np.nan
        except ValueError as exc:
            raise DatasetError(f"indicator {column} is not a number: {cell!r}", case_id=case_id) from exc
    return case_id, int(raw_label), values


def load_dataset(directory: Path, workers: Optional[int] = None) -> list[Case]:
    """Read and validate every case; returns cases sorted by case_id."""
    directory = Path(directory)
    manifest = read_manifest(directory)
    columns = indicator_columns(manifest.num_indicators)
    csv_path = directory / CASES_NAME
    if not csv_path.is_file():
        raise DatasetError("cases.csv not found", path=str(csv_path))

    with open(csv_path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        if header != ["case_id", "label"] + columns:
            raise DatasetError(
                f"cases.csv header does not match {manifest.num_indicators} indicators", path=str(csv_path)
            )
        rows = [_parse_row(row, columns, line) for line, row in enumerate(reader, start=2)]

    if len(rows) != manifest.n_cases:
        raise DatasetError(f"manifest lists {manifest.n_cases} cases but cases.csv has {len(rows)}")
    ids = [case_id for case_id, _, _ in rows]
    if len(set(ids)) != len(ids):
        raise DatasetError("cases.csv contains duplicate case ids", path=str(csv_path))

    def _load(entry: tuple[str, int, np.ndarray]) -> Case:
        case_id, label, values = entry
        found = sorted((directory / IMAGES_DIR).glob(f"{case_id}_d*.pgm"))
        if len(found) != manifest.num_days:
            raise DatasetError(f"expected {manifest.num_days} images, found {len(found)}", case_id=case_id)
        frames = []
        for day in range(1, manifest.num_days + 1):
            path = image_path(directory, case_id, day)
            if not path.is_file():
                raise DatasetError(f"missing image for day {day}", case_id=case_id, path=str(path))
            frame = read_pgm(path, case_id)
            if frame.shape != (manifest.image_size, manifest.image_size):
                raise DatasetError(
                    f"day {day} image is {frame.shape[1]}x{frame.shape[0]}, "
                    f"manifest says {manifest.image_size}x{manifest.image_size}",
                    case_id=case_id,
                    path=str(path),
                )
            frames.append(frame)
        return Case(case_id=case_id, images=np.stack(frames), indicators=values, label=label)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        cases = list(pool.map(_load, rows))
    cases.sort(key=lambda c: c.case_id)
    logger.info("Loaded %d cases from %s", len(cases), directory)
    return cases
