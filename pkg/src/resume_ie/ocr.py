"""Region cropping and greedy CTC decoding of recognizer logits.

The pretrained recognizer is consumed through a port that maps a cropped
region image to a T x (S+1) logit matrix; column 0 is the CTC blank and
column i+1 is charset symbol i.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .detect import TextRegion, reading_order
from .ingest import PageImage

BLANK_INDEX = 0


class RecognitionError(Exception):
    """Recognizer port or decode failure, carrying the region index."""

    def __init__(self, message: str, region_index: int | None = None):
        super().__init__(message)
        self.region_index = region_index


@dataclass(frozen=True)
class Charset:
    """CTC alphabet: index 0 is blank, index i+1 maps to symbols[i]."""

    symbols: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.symbols:
            raise ValueError("charset must contain at least one symbol")
        if any(not s for s in self.symbols):
            raise ValueError("charset symbols must be non-empty")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("charset symbols must be unique")

    def __len__(self) -> int:
        return len(self.symbols)

    def char_for(self, index: int) -> str:
        if index == BLANK_INDEX:
            raise ValueError("blank never maps to a character")
        return self.symbols[index - 1]

    def index_of(self, char: str) -> int:
        try:
            return self.symbols.index(char) + 1
        except ValueError:
            raise ValueError(f"character {char!r} not in charset") from None


def load_charset(path: str | Path) -> Charset:
    """Read a charset sidecar file: one symbol per line, line i = index i+1."""
    lines = Path(path).read_text("utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ValueError(f"charset file {path} is empty")
    return Charset(tuple(lines))


@dataclass(frozen=True)
class OcrResult:
    region: TextRegion
    text: str
    mean_confidence: float


class RecognizerPort(Protocol):
    """Runs the pretrained recognizer on a cropped region image.

    Owns its model-specific preprocessing; exclusive-use per worker.
    """

    def infer(self, crop: np.ndarray) -> np.ndarray: ...


def crop(page: PageImage, region: TextRegion, margin: int = 2) -> np.ndarray:
    """Cut the region out of the page, expanded by margin and clamped."""
    x1, y1, x2, y2 = (int(round(v)) for v in region.box)
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        raise ValueError(f"zero-area region {region.box}")
    h, w = page.pixels.shape[:2]
    x1 = max(0, x1 - margin)
    y1 = max(0, y1 - margin)
    x2 = min(w, x2 + margin)
    y2 = min(h, y2 + margin)
    return page.pixels[y1:y2, x1:x2]


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def ctc_greedy_decode(logits: np.ndarray, charset: Charset) -> tuple[str, float]:
    """Best-path decode: per-step argmax, collapse repeats, drop blanks.

    The confidence is the mean softmax probability of the chosen index over
    emission steps (one per collapsed run); zero emissions give 0.0.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] < 1:
        raise ValueError(f"expected T x (S+1) logits, got shape {logits.shape}")
    if logits.shape[1] != len(charset) + 1:
        raise ValueError(
            f"logits have {logits.shape[1]} columns but charset needs {len(charset) + 1}"
        )
    path = np.argmax(logits, axis=1)
    probs = _softmax_rows(logits)
    chars: list[str] = []
    confidences: list[float] = []
    prev = BLANK_INDEX
    for t, idx in enumerate(path):
        idx = int(idx)
        if idx != BLANK_INDEX and idx != prev:
            chars.append(charset.char_for(idx))
            confidences.append(float(probs[t, idx]))
        prev = idx
    text = "".join(chars)
    mean_confidence = float(np.mean(confidences)) if confidences else 0.0
    return text, mean_confidence


def recognize(
    page: PageImage,
    regions: Sequence[TextRegion],
    port: RecognizerPort,
    charset: Charset,
    margin: int = 2,
) -> list[OcrResult]:
    """OCR every region in reading order; empty decodes are kept with empty
    text so the caller can filter."""
    if regions and all(r.order_index is not None for r in regions):
        ordered = sorted(regions, key=lambda r: r.order_index)
    else:
        ordered = reading_order(regions)
    results: list[OcrResult] = []
    for index, region in enumerate(ordered):
        try:
            image = crop(page, region, margin=margin)
            logits = np.asarray(port.infer(image))
            text, confidence = ctc_greedy_decode(logits, charset)
        except Exception as e:
            raise RecognitionError(
                f"recognizer failed on region {index}: {e}", region_index=index
            ) from e
        results.append(OcrResult(region=region, text=text, mean_confidence=confidence))
    return results
