"""Variant registry for the ablation grid.

Each variant is a named set of config overrides applied on top of a base
experiment config. Variants are grouped by what they compare, so
``ablate --grid pe`` runs exactly one group.
"""
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, List, Optional

from errors import ConfigError


@dataclass(frozen=True)
class VariantInfo:
    """One row of an ablation table."""
    name: str
    group: str
    label: str
    overrides: tuple[tuple[str, Any], ...] = ()
    description: str = ""

    def override_dict(self) -> dict[str, Any]:
        return {key: (list(value) if isinstance(value, tuple) else value) for key, value in self.overrides}


GRID_GROUPS = ("pe", "stpe", "fusion", "days", "baselines")


class VariantRegistry:
    """Registry of all built-in variants."""

    def list_all_variants(self) -> List[VariantInfo]:
        return [
            # Position encoding family on the full model
            VariantInfo("pe_none", "pe", "w/o STPE", (("pe", "none"),), "Tokens without position encoding"),
            VariantInfo("pe_sincos", "pe", "SinCos", (("pe", "sincos"),), "Fixed sine-cosine encoding"),
            VariantInfo("pe_learnable", "pe", "Learnable", (("pe", "learnable"),), "One learned vector per token"),
            VariantInfo("pe_stpe", "pe", "STPE", (("pe", "stpe"),), "Spatial-temporal encoding with attention"),
            # STPE sub-ablations
            VariantInfo("stpe_no_spe", "stpe", "w/o SPE", (("pe", "stpe_no_spe"),), "PE = PE_t"),
            VariantInfo("stpe_no_tpe", "stpe", "w/o TPE", (("pe", "stpe_no_tpe"),), "PE = PE_s"),
            VariantInfo("stpe_no_att", "stpe", "w/o PEAttention", (("pe", "stpe_no_att"),), "PE = PE_s + PE_t"),
            # Fusion heads
            VariantInfo("fusion_add", "fusion", "AddFusion", (("fusion", "add"),), "Classifier on f_i + f_t"),
            VariantInfo(
                "fusion_concat",
                "fusion",
                "w/o Decoupling Module",
                (("fusion", "concat"),),
                "Classifier on concat(f_i, f_t), lambda forced to 0",
            ),
            VariantInfo("fusion_decoupling", "fusion", "DeFusion", (("fusion", "decoupling"),)),
            # Day subsets on the image-only model
            VariantInfo("days_1", "days", "Day 1", (("modality", "image"), ("days", (1,)))),
            VariantInfo("days_2", "days", "Day 2", (("modality", "image"), ("days", (2,)))),
            VariantInfo("days_3", "days", "Day 3", (("modality", "image"), ("days", (3,)))),
            VariantInfo("days_123", "days", "Days 1-3", (("modality", "image"), ("days", (1, 2, 3)))),
            # Unimodal and simple-fusion baselines against the full model
            VariantInfo("base_table", "baselines", "TabTransformer", (("modality", "table"),)),
            VariantInfo("base_image_learnable", "baselines", "ResNet+Learnable", (("modality", "image"), ("pe", "learnable"))),
            VariantInfo("base_image_sincos", "baselines", "ResNet+SinCos", (("modality", "image"), ("pe", "sincos"))),
            VariantInfo("base_image_stpe", "baselines", "ResNet+STPE", (("modality", "image"), ("pe", "stpe"))),
            VariantInfo("base_add_fusion", "baselines", "AddFusion", (("fusion", "add"),)),
            VariantInfo("base_no_decoupling", "baselines", "w/o Decoupling Module", (("fusion", "concat"),)),
            VariantInfo("base_defusion", "baselines", "DeFusion", (("fusion", "decoupling"),)),
        ]

    def get_variant(self, name: str) -> VariantInfo:
        for variant in self.list_all_variants():
            if variant.name == name:
                return variant
        valid = ", ".join(v.name for v in self.list_all_variants())
        raise ConfigError(f"unknown variant '{name}'; valid variants: {valid}")

    def find_variant(self, name: str) -> Optional[VariantInfo]:
        return next((v for v in self.list_all_variants() if v.name == name), None)

    def get_variants_by_group(self, group: str) -> List[VariantInfo]:
        if group not in GRID_GROUPS:
            raise ConfigError(f"unknown grid '{group}'; valid grids: {', '.join(GRID_GROUPS)}")
        return [v for v in self.list_all_variants() if v.group == group]

    def resolve(self, names: List[str]) -> List[VariantInfo]:
        """Expand grid names and variant names, keeping order and dropping repeats."""
        resolved: list[VariantInfo] = []
        for name in names:
            batch = self.get_variants_by_group(name) if name in GRID_GROUPS else [self.get_variant(name)]
            resolved.extend(v for v in batch if v not in resolved)
        return resolved


def load_variant_file(path: Path) -> List[VariantInfo]:
    """Custom grid from a JSON list of ``{"name", "overrides", "label"?}`` rows."""
    path = Path(path)
    try:
        rows = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"variant file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"variant file {path} is not valid JSON: {exc}") from exc
    if not isinstance(rows, list) or not rows:
        raise ConfigError(f"variant file {path} must hold a non-empty JSON list")
    variants = []
    for index, row in enumerate(rows):
        if not isinstance(row, dict) or "name" not in row or not isinstance(row.get("overrides", {}), dict):
            raise ConfigError(f"variant file {path}: row {index} needs a name and an overrides object")
        overrides = tuple(
            (key, tuple(value) if isinstance(value, list) else value) for key, value in row.get("overrides", {}).items()
        )
        variants.append(
            VariantInfo(
                name=str(row["name"]),
                group="custom",
                label=str(row.get("label", row["name"])),
                overrides=overrides,
                description=str(row.get("description", "")),
            )
        )
    names = [v.name for v in variants]
    if len(set(names)) != len(names):
        raise ConfigError(f"variant file {path} repeats a variant name")
    return variants
