"""Feature exporter: runs a pretrained vision backbone over an image dataset,
applies standard augmentations, and writes AIFT v1 feature files."""

from .errors import ExportError
from .spec import AUGMENTATION_NAMES, BACKBONE_FAMILIES, ExportSpec
from .export import export_features

__all__ = ["AUGMENTATION_NAMES", "BACKBONE_FAMILIES", "ExportError",
           "ExportSpec", "export_features"]
__version__ = "0.1.0"
