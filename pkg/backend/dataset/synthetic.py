"""Synthetic temporal-image + indicator cohort with a known latent structure.

Per case three latent vectors are drawn: ``z_s`` is seen by both modalities,
``z_i`` only by the images and ``z_t`` only by the indicators. The label
depends on all three, so each modality alone is informative but neither is
sufficient. Day d shows 2**(d-1) cells whose geometry is modulated by the
image latents with a strength growing in d, so later days carry more signal
and day order matters.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import expit

from autograd.rng import Rng
from errors import ConfigError

from .storage import Case, write_dataset

logger = logging.getLogger(__name__)

GEOMETRY_PARAMS = 4
BACKGROUND = 0.2


@dataclass(frozen=True)
class GeneratorSpec:
    n_cases: int = 2000
    image_size: int = 36
    num_days: int = 3
    num_indicators: int = 22
    missing_rate: float = 0.05
    noise_sigma: float = 0.05
    shared_signal_strength: float = 1.0
    latent_dim: int = 2
    label_weights: tuple[float, float, float] = (4.0, 3.0, 3.0)
    indicator_noise: float = 0.1
    planned_folds: int = 5
    seed: int = 42

    def validate(self) -> None:
        if self.planned_folds < 2 or self.n_cases < 2 * self.planned_folds:
            raise ConfigError(
                f"n_cases ({self.n_cases}) must be at least twice the fold count ({self.planned_folds})"
            )
        if not 0.0 <= self.missing_rate < 1.0:
            raise ConfigError(f"missing_rate must be in [0, 1), got {self.missing_rate}")
        if self.image_size < 8:
            raise ConfigError(f"image_size must be at least 8, got {self.image_size}")
        if self.num_days < 1 or self.num_indicators < 1 or self.latent_dim < 1:
            raise ConfigError("num_days, num_indicators and latent_dim must be positive")
        if self.noise_sigma < 0 or self.indicator_noise < 0 or self.shared_signal_strength < 0:
            raise ConfigError("noise levels and signal strength must be non-negative")
        if len(self.label_weights) != 3:
            raise ConfigError("label_weights needs one weight per latent (shared, image, table)")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["label_weights"] = list(self.label_weights)
        return out


@dataclass
class Latents:
    shared: np.ndarray
    image: np.ndarray
    table: np.ndarray
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def sample_latents(spec: GeneratorSpec, rng: Rng) -> Latents:
    gen = rng.generator("latents")
    n, dim = spec.n_cases, spec.latent_dim
    latents = Latents(gen.normal(size=(n, dim)), gen.normal(size=(n, dim)), gen.normal(size=(n, dim)))
    w_s, w_i, w_t = spec.label_weights
    logit = (
        w_s * latents.shared @ _unit(gen, dim)
        + w_i * latents.image @ _unit(gen, dim)
        + w_t * latents.table @ _unit(gen, dim)
    )
    latents.labels = (rng.generator("labels").random(n) < expit(logit)).astype(np.int64)
    return latents


def render_day(
    size: int,
    day: int,
    num_days: int,
    geometry: np.ndarray,
    noise: np.ndarray,
) -> np.ndarray:
    """One 8-bit frame: 2**(day-1) bright ellipses on a dark background."""
    count = 2 ** (day - 1)
    s = geometry * (day / num_days)
    centre = (size - 1) / 2.0
    base = 0.28 * size / math.sqrt(count)
    radius = base * (1.0 + 0.3 * math.tanh(s[0])) * (1.0 + 0.1 * (day - 1) * math.tanh(s[0]))
    aspect = 1.0 + 0.4 * math.tanh(s[1])
    intensity = 0.65 + 0.2 * math.tanh(s[2])
    rotation = 0.8 * s[3]

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    frame = np.full((size, size), BACKGROUND)
    spread = 0.0 if count == 1 else 0.9 * radius
    for cell in range(count):
        angle = rotation + 2.0 * math.pi * cell / count
        cx = centre + spread * math.cos(angle)
        cy = centre + spread * math.sin(angle)
        dx, dy = xx - cx, yy - cy
        u = dx * math.cos(rotation) + dy * math.sin(rotation)
        v = -dx * math.sin(rotation) + dy * math.cos(rotation)
        inside = (u / (radius * aspect)) ** 2 + (v / (radius / aspect)) ** 2 <= 1.0
        frame[inside] = intensity
    frame = np.clip(frame + noise, 0.0, 1.0)
    return np.round(frame * 255.0).astype(np.uint8)


def generate_cases(spec: GeneratorSpec) -> list[Case]:
    """Build every case in memory; identical output for an identical spec."""
    spec.validate()
    rng = Rng(spec.seed)
    latents = sample_latents(spec, rng)
    dim = spec.latent_dim

    mix = rng.generator("mixing")
    image_shared = mix.normal(size=(dim, GEOMETRY_PARAMS)) / math.sqrt(dim)
    image_own = mix.normal(size=(dim, GEOMETRY_PARAMS)) / math.sqrt(dim)
    table_shared = mix.normal(size=(dim, spec.num_indicators)) / math.sqrt(dim)
    table_own = mix.normal(size=(dim, spec.num_indicators)) / math.sqrt(dim)
    location = mix.uniform(1.0, 100.0, size=spec.num_indicators)
    spread = mix.uniform(0.5, 20.0, size=spec.num_indicators)

    strength = spec.shared_signal_strength
    geometry = strength * latents.shared @ image_shared + latents.image @ image_own
    raw = (
        strength * latents.shared @ table_shared
        + latents.table @ table_own
        + spec.indicator_noise * rng.generator("indicator-noise").normal(size=(spec.n_cases, spec.num_indicators))
    )
    indicators = np.round(location + spread * raw, 3)
    missing = rng.generator("missing").random(indicators.shape) < spec.missing_rate
    indicators[missing] = np.nan

    pixel_noise = rng.generator("pixels").normal(
        0.0, spec.noise_sigma, size=(spec.n_cases, spec.num_days, spec.image_size, spec.image_size)
    )
    cases = []
    for index in range(spec.n_cases):
        frames = np.stack(
            [
                render_day(spec.image_size, day, spec.num_days, geometry[index], pixel_noise[index, day - 1])
                for day in range(1, spec.num_days + 1)
            ]
        )
        cases.append(
            Case(
                case_id=f"case_{index:05d}",
                images=frames,
                indicators=indicators[index].copy(),
                label=int(latents.labels[index]),
            )
        )
    logger.info(
        "Generated %d cases (%d positive), %.1f%% indicator cells missing",
        spec.n_cases,
        int(latents.labels.sum()),
        100.0 * missing.mean(),
    )
    return cases


def generate(spec: GeneratorSpec, directory: Path, workers: Optional[int] = None) -> Path:
    """Generate the cohort and write it under ``directory``."""
    cases = generate_cases(spec)
    return write_dataset(Path(directory), cases, generator=spec.to_dict(), workers=workers)
