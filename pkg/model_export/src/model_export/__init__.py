"""Model export tool: TorchScript conversion, sidecars, verified manifests."""

from .exporters import export_backbone, export_detector, export_recognizer
from .manifest import ExportError, ExportManifest, load_manifest, load_verified

__all__ = [
    "ExportError",
    "ExportManifest",
    "export_backbone",
    "export_detector",
    "export_recognizer",
    "load_manifest",
    "load_verified",
]

__version__ = "0.1.0"
