"""The assembled multi-modal network and its unimodal / ablation variants."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from autograd import Module, Parameter, Tensor, ops
from errors import ConfigError

from .fusion import (
    Alignment,
    AlignedFeatures,
    Classifier,
    DecoupledFeatures,
    DecouplingModule,
    cross_reconstruction_loss,
    total_loss,
)
from .image_extractor import ImageExtractor, ImageExtractorConfig
from .table_extractor import TableExtractor, TableExtractorConfig

logger = logging.getLogger(__name__)

FUSIONS = ("decoupling", "concat", "add")
MODALITIES = ("multimodal", "image", "table")
CLASSIFIER_INPUTS = ("decoupled", "reconstructed")

# Checkpoint name prefix -> optimizer parameter group.
GROUP_PREFIXES = {
    "image_extractor.": "image",
    "table_extractor.": "table",
}


@dataclass(frozen=True)
class ModelConfig:
    image: ImageExtractorConfig = field(default_factory=ImageExtractorConfig)
    table: TableExtractorConfig = field(default_factory=TableExtractorConfig)
    d_f: int = 32
    m: int = 32
    fusion_hidden: int = 64
    classifier_hidden: int = 64
    fusion: str = "decoupling"
    modality: str = "multimodal"
    classifier_input: str = "decoupled"

    def validate(self) -> None:
        if self.fusion not in FUSIONS:
            raise ConfigError(f"unknown fusion '{self.fusion}'; valid: {', '.join(FUSIONS)}")
        if self.modality not in MODALITIES:
            raise ConfigError(f"unknown modality '{self.modality}'; valid: {', '.join(MODALITIES)}")
        if self.classifier_input not in CLASSIFIER_INPUTS:
            raise ConfigError(
                f"unknown classifier input '{self.classifier_input}'; valid: {', '.join(CLASSIFIER_INPUTS)}"
            )
        if min(self.d_f, self.m, self.fusion_hidden, self.classifier_hidden) < 1:
            raise ConfigError("fusion dims must be positive")
        self.image.validate()
        self.table.validate()

    @property
    def uses_reconstruction(self) -> bool:
        return self.modality == "multimodal" and self.fusion == "decoupling"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ForwardOutput:
    probs: Tensor
    recon: Optional[Tensor] = None
    aligned: Optional[AlignedFeatures] = None
    decoupled: Optional[DecoupledFeatures] = None


class DeFusionNet(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        config.validate()
        self.config = config
        use_image = config.modality in ("multimodal", "image")
        use_table = config.modality in ("multimodal", "table")
        self.image_extractor = ImageExtractor(config.image, rng) if use_image else None
        self.table_extractor = TableExtractor(config.table, rng) if use_table else None
        self.align = None
        self.decouple = None
        if config.modality == "multimodal":
            self.align = Alignment(config.image.d_model, config.table.d_model, config.d_f, rng)
            if config.fusion == "decoupling":
                self.decouple = DecouplingModule(config.d_f, config.m, config.fusion_hidden, rng)
        self.classifier = Classifier(self._classifier_width(), config.classifier_hidden, rng)

    def _classifier_width(self) -> int:
        cfg = self.config
        if cfg.modality == "image":
            return cfg.image.d_model
        if cfg.modality == "table":
            return cfg.table.d_model
        if cfg.fusion == "add":
            return cfg.d_f
        if cfg.fusion == "concat" or cfg.classifier_input == "reconstructed":
            return 2 * cfg.d_f
        return 4 * cfg.m

    def encode_image(self, images: Tensor, trace: Optional[dict] = None) -> Tensor:
        return self.image_extractor(images, trace)[1]

    def encode_table(self, table: Tensor, trace: Optional[dict] = None) -> Tensor:
        return self.table_extractor(table, trace)[1]

    def forward(
        self,
        images: Optional[Tensor],
        table: Optional[Tensor],
        trace: Optional[dict] = None,
    ) -> ForwardOutput:
        cfg = self.config
        if cfg.modality == "image":
            return ForwardOutput(self.classifier(self.encode_image(images, trace)))
        if cfg.modality == "table":
            return ForwardOutput(self.classifier(self.encode_table(table, trace)))

        aligned = self.align(self.encode_image(images, trace), self.encode_table(table, trace))
        if cfg.fusion == "add":
            return ForwardOutput(self.classifier(ops.add(aligned.f_i, aligned.f_t)), aligned=aligned)
        if cfg.fusion == "concat":
            return ForwardOutput(self.classifier(ops.concat([aligned.f_i, aligned.f_t], axis=-1)), aligned=aligned)

        decoupled = self.decouple(aligned)
        rec_i, rec_t = self.decouple.reconstruct(decoupled)
        recon = cross_reconstruction_loss(aligned.f_i, aligned.f_t, rec_i, rec_t)
        if cfg.classifier_input == "reconstructed":
            features = ops.concat([rec_i, rec_t], axis=-1)
        else:
            features = ops.concat(
                [decoupled.image_common, decoupled.image_unique, decoupled.table_common, decoupled.table_unique],
                axis=-1,
            )
        return ForwardOutput(self.classifier(features), recon=recon, aligned=aligned, decoupled=decoupled)

    def loss(self, output: ForwardOutput, labels: np.ndarray, lam: float) -> tuple[Tensor, Tensor]:
        """(L, L_ce); lambda only applies when the decoupling module is active."""
        effective = lam if self.config.uses_reconstruction else 0.0
        return total_loss(output.probs, labels, output.recon, effective)

    def parameter_groups(self) -> dict[str, list[tuple[str, Parameter]]]:
        groups: dict[str, list[tuple[str, Parameter]]] = {"image": [], "table": [], "fusion": []}
        for name, param in self.named_parameters():
            group = next((g for prefix, g in GROUP_PREFIXES.items() if name.startswith(prefix)), "fusion")
            groups[group].append((name, param))
        return groups
