"""Resume information extraction: detection post-processing, OCR decoding,
section classification, and the training/evaluation harness."""

__version__ = "0.1.0"
