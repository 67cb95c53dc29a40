"""Model definitions: extractors, fusion head, assembled network, variant registry."""
from .defusion import DeFusionNet, ForwardOutput, ModelConfig
from .fusion import AlignedFeatures, DecoupledFeatures
from .image_extractor import ImageExtractor, ImageExtractorConfig
from .registry import VariantInfo, VariantRegistry
from .table_extractor import TableExtractor, TableExtractorConfig

__all__ = [
    "AlignedFeatures",
    "DeFusionNet",
    "DecoupledFeatures",
    "ForwardOutput",
    "ImageExtractor",
    "ImageExtractorConfig",
    "ModelConfig",
    "TableExtractor",
    "TableExtractorConfig",
    "VariantInfo",
    "VariantRegistry",
]
