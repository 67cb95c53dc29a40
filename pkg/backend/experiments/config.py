"""Experiment configuration: profiles, JSON file, CLI overrides."""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from errors import ConfigError
from models.defusion import ModelConfig
from models.image_extractor import ImageExtractorConfig
from models.table_extractor import TableExtractorConfig

PeVariant = Literal["none", "sincos", "learnable", "stpe", "stpe_no_spe", "stpe_no_tpe", "stpe_no_att"]

PROFILES: dict[str, dict[str, Any]] = {
    # Laptop scale: 36 -> 32 crop, stride 8, 4x4 maps, small transformers.
    # The reconstruction term sums over d_f dims and dwarfs L_ce at the start,
    # so it is weighted down and ramped in after the extractors are pretrained.
    "desk": {
        "image_size": 32,
        "resize": 36,
        "stride": 8,
        "channels": 32,
        "d_img": 32,
        "d_tab": 32,
        "lr_img": 1e-3,
        "lr_tab": 1e-3,
        "lr_fusion": 1e-3,
        "lambda": 0.1,
        "lambda_warmup": 3,
        "pretrain_epochs": 2,
        "epochs": 18,
        "batch_size": 32,
    },
    # Published scale: 256 -> 224 crop, lambda 1, per-module rates.
    "paper": {
        "image_size": 224,
        "resize": 256,
        "stride": 32,
        "channels": 64,
        "d_img": 64,
        "d_tab": 32,
        "lr_img": 1e-6,
        "lr_tab": 1e-4,
        "lr_fusion": 1e-5,
        "lambda": 1.0,
        "epochs": 100,
        "batch_size": 32,
    },
}
PROFILE_ALIASES = {"full": "paper"}


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    profile: Literal["desk", "paper"] = "desk"
    dataset: Optional[str] = None

    # Model dims
    image_size: int = 32
    resize: Optional[int] = 36
    stride: int = 8
    channels: int = 32
    res_blocks: int = 2
    d_img: int = 32
    d_tab: int = 32
    d_f: int = 32
    m: int = 32
    heads: int = 4
    img_layers: int = 2
    tab_layers: int = 2
    mlp_ratio: int = 2
    fusion_hidden: int = 64
    classifier_hidden: int = 64
    num_days: int = 3
    num_indicators: int = 22

    # Variants
    pe: PeVariant = "stpe"
    fusion: Literal["decoupling", "concat", "add"] = "decoupling"
    modality: Literal["multimodal", "image", "table"] = "multimodal"
    classifier_input: Literal["decoupled", "reconstructed"] = "decoupled"
    days: tuple[int, ...] = (1, 2, 3)

    # Optimisation
    lam: float = Field(1.0, alias="lambda")
    lambda_warmup: int = 0
    lr_img: float = 1e-3
    lr_tab: float = 1e-3
    lr_fusion: float = 1e-3
    epochs: int = 20
    pretrain_epochs: int = 0
    batch_size: int = 32
    dtype: Literal["float32", "float64"] = "float32"

    # Evaluation plan
    k: int = 5
    stratified: bool = True
    holdout_fold: int = 0
    seed: int = 42
    image_normalization: Literal["fixed", "dataset"] = "fixed"

    @field_validator("days", mode="before")
    @classmethod
    def _normalize_days(cls, value):
        if isinstance(value, str):
            value = [int(part) for part in value.replace(",", " ").split()]
        return tuple(sorted(set(int(v) for v in value)))

    @model_validator(mode="after")
    def _check(self) -> "ExperimentConfig":
        if self.stride < 1 or self.stride & (self.stride - 1):
            raise ValueError(f"stride must be a power of two, got {self.stride}")
        if self.image_size % self.stride:
            raise ValueError(f"image_size {self.image_size} is not divisible by stride {self.stride}")
        if self.resize is not None and self.resize < self.image_size:
            raise ValueError(f"resize ({self.resize}) must be at least the crop size ({self.image_size})")
        for name, dim in (("d_img", self.d_img), ("d_tab", self.d_tab)):
            if dim < 1 or self.heads < 1 or dim % self.heads:
                raise ValueError(f"heads ({self.heads}) must divide {name} ({dim})")
        if not self.days or self.days[0] < 1 or self.days[-1] > self.num_days:
            raise ValueError(f"days must be a non-empty subset of 1..{self.num_days}, got {list(self.days)}")
        if not math.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")
        for name in ("lr_img", "lr_tab", "lr_fusion"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if self.k < 2:
            raise ValueError(f"k must be at least 2, got {self.k}")
        if not 0 <= self.holdout_fold < self.k:
            raise ValueError(f"holdout_fold must be in 0..{self.k - 1}, got {self.holdout_fold}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.pretrain_epochs < 0 or self.lambda_warmup < 0:
            raise ValueError("pretrain_epochs and lambda_warmup must be non-negative")
        positive = ("channels", "d_f", "m", "img_layers", "tab_layers", "mlp_ratio", "num_indicators", "num_days")
        for name in positive:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        return self

    # ─── Derived views ──────────────────────────────────────────────

    def effective_lambda(self) -> float:
        return self.lam if self.modality == "multimodal" and self.fusion == "decoupling" else 0.0

    def lambda_at(self, epoch: int) -> float:
        """Linear ramp from 0 at epoch 1 to the full weight at epoch ``lambda_warmup + 1``."""
        if self.lambda_warmup == 0:
            return self.lam
        return self.lam * min(1.0, (epoch - 1) / self.lambda_warmup)

    def model(self) -> ModelConfig:
        return ModelConfig(
            image=ImageExtractorConfig(
                image_size=self.image_size,
                num_days=len(self.days),
                stride=self.stride,
                channels=self.channels,
                res_blocks=self.res_blocks,
                d_model=self.d_img,
                heads=self.heads,
                layers=self.img_layers,
                mlp_ratio=self.mlp_ratio,
                pe=self.pe,
            ),
            table=TableExtractorConfig(
                num_indicators=self.num_indicators,
                d_model=self.d_tab,
                heads=self.heads,
                layers=self.tab_layers,
                mlp_ratio=self.mlp_ratio,
            ),
            d_f=self.d_f,
            m=self.m,
            fusion_hidden=self.fusion_hidden,
            classifier_hidden=self.classifier_hidden,
            fusion=self.fusion,
            modality=self.modality,
            classifier_input=self.classifier_input,
        )

    def to_json_dict(self) -> dict[str, Any]:
        data = self.model_dump(mode="json", by_alias=True)
        data["days"] = list(self.days)
        return data

    def digest(self, exclude: tuple[str, ...] = ()) -> str:
        data = {k: v for k, v in self.to_json_dict().items() if k not in exclude}
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode("utf-8")).hexdigest()[:12]

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        return build_config({**self.to_json_dict(), **overrides})


def build_config(values: dict[str, Any]) -> ExperimentConfig:
    values = dict(values)
    if "lam" in values:
        values["lambda"] = values.pop("lam")
    try:
        return ExperimentConfig.model_validate(values)
    except ValidationError as exc:
        details = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigError(f"invalid experiment config: {details}") from exc


def load_config_file(path: Path) -> dict[str, Any]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return raw


def resolve_config(
    profile: str = "desk",
    config_file: Optional[Path] = None,
    overrides: Optional[dict[str, Any]] = None,
) -> ExperimentConfig:
    """Profile defaults < JSON file < explicit overrides (``None`` values ignored)."""
    file_values = load_config_file(config_file) if config_file else {}
    profile = (overrides or {}).get("profile") or file_values.get("profile") or profile
    profile = PROFILE_ALIASES.get(profile, profile)
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile '{profile}'; valid: {', '.join(PROFILES)}")
    merged: dict[str, Any] = {"profile": profile, **PROFILES[profile], **file_values}
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    merged["profile"] = profile
    return build_config(merged)
