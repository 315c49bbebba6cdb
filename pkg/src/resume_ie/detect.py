"""Detector output decoding: score filtering, NMS, and reading order.

The detector inference port maps one PageImage to a raw N x (4+C) tensor of
(cx, cy, w, h, class scores) rows in letterboxed pixel space; everything
after that lives here so any exported detector works.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .ingest import PAGE_SIZE, PageImage
from .metrics import iou


class DetectorPort(Protocol):
    """Runs the trained detector on one page. Exclusive-use per worker."""

    def infer(self, page: PageImage) -> np.ndarray: ...


@dataclass(frozen=True)
class TextRegion:
    """A detected text group in letterboxed page coordinates."""

    box: tuple[float, float, float, float]
    score: float
    class_id: int
    order_index: int | None = None

    def __post_init__(self) -> None:
        x1, y1, x2, y2 = self.box
        if not (0 <= x1 < x2 <= PAGE_SIZE and 0 <= y1 < y2 <= PAGE_SIZE):
            raise ValueError(f"degenerate or out-of-bounds region box {self.box}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    @property
    def center_y(self) -> float:
        return (self.box[1] + self.box[3]) / 2.0

    @property
    def height(self) -> float:
        return self.box[3] - self.box[1]


def decode(tensor: np.ndarray, conf_threshold: float = 0.25) -> list[TextRegion]:
    """Convert raw detector rows to clamped xyxy regions above the threshold."""
    if not 0.0 <= conf_threshold <= 1.0:
        raise ValueError(f"conf_threshold {conf_threshold} outside [0, 1]")
    t = np.asarray(tensor, dtype=np.float64)
    if t.size == 0:
        return []
    if t.ndim != 2 or t.shape[1] < 5:
        raise ValueError(f"expected N x (4+C) tensor, got shape {t.shape}")
    regions: list[TextRegion] = []
    for row in t:
        cx, cy, w, h = row[:4]
        scores = row[4:]
        class_id = int(np.argmax(scores))
        score = float(scores[class_id])
        if score < conf_threshold:
            continue
        x1 = min(max(cx - w / 2.0, 0.0), float(PAGE_SIZE))
        y1 = min(max(cy - h / 2.0, 0.0), float(PAGE_SIZE))
        x2 = min(max(cx + w / 2.0, 0.0), float(PAGE_SIZE))
        y2 = min(max(cy + h / 2.0, 0.0), float(PAGE_SIZE))
        if x2 <= x1 or y2 <= y1:
            continue
        regions.append(TextRegion(box=(x1, y1, x2, y2), score=score, class_id=class_id))
    return regions


def nms(regions: Sequence[TextRegion], iou_threshold: float = 0.45) -> list[TextRegion]:
    """Greedy per-class suppression: drop a region iff it overlaps an
    already-kept same-class region with IoU >= threshold."""
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold {iou_threshold} outside (0, 1]")
    order = sorted(range(len(regions)), key=lambda i: (-regions[i].score, i))
    kept: list[TextRegion] = []
    for i in order:
        candidate = regions[i]
        suppressed = any(
            k.class_id == candidate.class_id and iou(k.box, candidate.box) >= iou_threshold
            for k in kept
        )
        if not suppressed:
            kept.append(candidate)
    return kept


def reading_order(regions: Sequence[TextRegion]) -> list[TextRegion]:
    """Assign order indices: rows top-to-bottom, left-to-right within a row.

    Two regions share a row when their y-centers differ by at most half the
    smaller box height.
    """
    by_y = sorted(regions, key=lambda r: (r.center_y, r.box[0]))
    rows: list[list[TextRegion]] = []
    for region in by_y:
        if rows:
            anchor = rows[-1][0]
            if abs(region.center_y - anchor.center_y) <= 0.5 * min(
                region.height, anchor.height
            ):
                rows[-1].append(region)
                continue
        rows.append([region])
    ordered: list[TextRegion] = []
    for row in rows:
        ordered.extend(sorted(row, key=lambda r: (r.box[0], r.center_y)))
    return [replace(r, order_index=i) for i, r in enumerate(ordered)]


def load_detection_labels(
    path: str | Path, image_size: float = float(PAGE_SIZE)
) -> list[tuple[int, tuple[float, float, float, float]]]:
    """Read a ground-truth label file: one "class cx cy w h" line per region,
    coordinates normalized to [0, 1] of the letterboxed image."""
    out: list[tuple[int, tuple[float, float, float, float]]] = []
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"{path}:{lineno}: expected 'class cx cy w h'")
        class_id = int(parts[0])
        cx, cy, w, h = (float(v) * image_size for v in parts[1:])
        out.append((class_id, (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)))
    return out
