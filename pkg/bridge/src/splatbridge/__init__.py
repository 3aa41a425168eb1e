"""Offline exporter: pretrained vision backbones to stillsplat's file formats."""

__version__ = "0.1.0"

from .export import ExportManifest, export_features, export_point_segmentations  # noqa: F401
