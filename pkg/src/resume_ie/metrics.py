"""Classification and detection metrics.

Classification: confusion matrix and F1 micro/macro/weighted with the 0/0 -> 0
convention. Detection: IoU, per-class average precision over the
all-points-interpolated PR curve, and mAP50 / mAP50-95.

AP integration runs on exact rationals so that a perfect detector scores
exactly 1.0; IoU and matching stay in floating point.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

MAP_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))


def confusion(
    labels_true: Sequence[int], labels_pred: Sequence[int], num_classes: int
) -> np.ndarray:
    """Count matrix with rows = true class, columns = predicted class."""
    if len(labels_true) != len(labels_pred):
        raise ValueError(
            f"length mismatch: {len(labels_true)} true vs {len(labels_pred)} predicted"
        )
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    for t, p in zip(labels_true, labels_pred):
        if not (0 <= t < num_classes and 0 <= p < num_classes):
            raise ValueError(f"label pair ({t}, {p}) outside [0, {num_classes})")
        cm[t, p] += 1
    return cm


@dataclass(frozen=True)
class F1Report:
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    support: tuple[int, ...]
    micro: float
    macro: float
    weighted: float

    def as_dict(self) -> dict:
        return {
            "per_class": [
                {"precision": p, "recall": r, "f1": f, "support": s}
                for p, r, f, s in zip(self.precision, self.recall, self.f1, self.support)
            ],
            "micro": self.micro,
            "macro": self.macro,
            "weighted": self.weighted,
        }


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def f1_report(cm: np.ndarray) -> F1Report:
    """Per-class precision/recall/F1 plus micro, macro, and support-weighted F1."""
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError(f"confusion matrix must be square, got {cm.shape}")
    total = int(cm.sum())
    if total == 0:
        raise ValueError("cannot report on an empty confusion matrix")

    k = cm.shape[0]
    precision, recall, f1 = [], [], []
    support = []
    tp_sum = fp_sum = fn_sum = 0
    for c in range(k):
        tp = int(cm[c, c])
        fp = int(cm[:, c].sum()) - tp
        fn = int(cm[c, :].sum()) - tp
        p = _safe_div(tp, tp + fp)
        r = _safe_div(tp, tp + fn)
        precision.append(p)
        recall.append(r)
        f1.append(_safe_div(2 * p * r, p + r))
        support.append(tp + fn)
        tp_sum += tp
        fp_sum += fp
        fn_sum += fn

    micro_p = _safe_div(tp_sum, tp_sum + fp_sum)
    micro_r = _safe_div(tp_sum, tp_sum + fn_sum)
    micro = _safe_div(2 * micro_p * micro_r, micro_p + micro_r)
    macro = sum(f1) / k
    weighted = sum(f * s for f, s in zip(f1, support)) / total
    return F1Report(
        precision=tuple(precision),
        recall=tuple(recall),
        f1=tuple(f1),
        support=tuple(support),
        micro=micro,
        macro=macro,
        weighted=weighted,
    )


def iou(
    a: tuple[float, float, float, float], b: tuple[float, float, float, float]
) -> float:
    """Intersection over union of two xyxy boxes; 0 when disjoint or degenerate."""
    ix1, iy1 = max(a[0], b[0]), max(a[1], b[1])
    ix2, iy2 = min(a[2], b[2]), min(a[3], b[3])
    iw, ih = max(0.0, ix2 - ix1), max(0.0, iy2 - iy1)
    inter = iw * ih
    area_a = max(0.0, a[2] - a[0]) * max(0.0, a[3] - a[1])
    area_b = max(0.0, b[2] - b[0]) * max(0.0, b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


@dataclass(frozen=True)
class Prediction:
    image_id: str
    class_id: int
    score: float
    box: tuple[float, float, float, float]


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    class_id: int
    box: tuple[float, float, float, float]


def _match_predictions(
    preds: Sequence[Prediction], gts: Sequence[GroundTruth], iou_threshold: float
) -> list[bool]:
    """Greedy matching in descending score order; each ground truth is usable
    once; IoU ties go to the earlier ground truth."""
    gts_by_image: dict[str, list[int]] = {}
    for gi, gt in enumerate(gts):
        gts_by_image.setdefault(gt.image_id, []).append(gi)
    matched = [False] * len(gts)
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    is_tp = [False] * len(preds)
    for pi in order:
        pred = preds[pi]
        best_gi = -1
        best_iou = 0.0
        for gi in gts_by_image.get(pred.image_id, []):
            if matched[gi]:
                continue
            overlap = iou(pred.box, gts[gi].box)
            if overlap >= iou_threshold and overlap > best_iou:
                best_iou = overlap
                best_gi = gi
        if best_gi >= 0:
            matched[best_gi] = True
            is_tp[pi] = True
    return [is_tp[pi] for pi in order]


def average_precision(
    preds: Sequence[Prediction], gts: Sequence[GroundTruth], iou_threshold: float = 0.5
) -> float:
    """Area under the monotonically-interpolated (all-points) PR curve.

    Callers filter to one class; boxes are only matched within the same image.
    """
    n_gt = len(gts)
    if n_gt == 0:
        return 0.0
    if not preds:
        return 0.0
    tps = _match_predictions(preds, gts, iou_threshold)

    recalls: list[Fraction] = []
    precisions: list[Fraction] = []
    tp = 0
    for i, is_tp in enumerate(tps, start=1):
        tp += int(is_tp)
        recalls.append(Fraction(tp, n_gt))
        precisions.append(Fraction(tp, i))

    # Monotone envelope from the right, then rectangle sum over recall steps.
    envelope = precisions[:]
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    ap = Fraction(0)
    prev_recall = Fraction(0)
    for r, p in zip(recalls, envelope):
        if r > prev_recall:
            ap += (r - prev_recall) * p
            prev_recall = r
    return float(ap)


@dataclass(frozen=True)
class DetectionEval:
    per_class: Mapping[int, Mapping[float, float]]
    map50: float
    map50_95: float
    thresholds: tuple[float, ...] = MAP_THRESHOLDS

    def as_dict(self) -> dict:
        return {
            "per_class": {
                str(c): {f"{t:.2f}": ap for t, ap in by_thr.items()}
                for c, by_thr in self.per_class.items()
            },
            "map50": self.map50,
            "map50_95": self.map50_95,
            "thresholds": list(self.thresholds),
        }


def map_eval(
    preds: Sequence[Prediction],
    gts: Sequence[GroundTruth],
    image_ids: Sequence[str] | None = None,
) -> DetectionEval:
    """Per-class AP at IoU 0.50..0.95 and the mAP50 / mAP50-95 means.

    The image universe defaults to the ground-truth image ids; predictions on
    unknown images are rejected.
    """
    known = set(image_ids) if image_ids is not None else {g.image_id for g in gts}
    for pred in preds:
        if pred.image_id not in known:
            raise ValueError(f"prediction references unknown image id {pred.image_id!r}")

    classes = sorted({g.class_id for g in gts})
    per_class: dict[int, dict[float, float]] = {}
    for c in classes:
        class_preds = [p for p in preds if p.class_id == c]
        class_gts = [g for g in gts if g.class_id == c]
        per_class[c] = {
            t: average_precision(class_preds, class_gts, t) for t in MAP_THRESHOLDS
        }
    if not classes:
        return DetectionEval(per_class={}, map50=0.0, map50_95=0.0)
    map50 = sum(per_class[c][0.50] for c in classes) / len(classes)
    map50_95 = sum(
        per_class[c][t] for c in classes for t in MAP_THRESHOLDS
    ) / (len(classes) * len(MAP_THRESHOLDS))
    return DetectionEval(per_class=per_class, map50=map50, map50_95=map50_95)


def load_predictions(path: str | Path) -> list[Prediction]:
    """Read a prediction file: one "image_id class score x1 y1 x2 y2" per line."""
    out: list[Prediction] = []
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 7:
            raise ValueError(f"{path}:{lineno}: expected 'image_id class score x1 y1 x2 y2'")
        out.append(
            Prediction(
                image_id=parts[0],
                class_id=int(parts[1]),
                score=float(parts[2]),
                box=tuple(float(v) for v in parts[3:7]),
            )
        )
    return out


def format_f1_report(report: F1Report, class_names: Sequence[str]) -> str:
    lines = [f"{'class':<12} {'precision':>9} {'recall':>9} {'f1':>9} {'support':>8}"]
    for name, p, r, f, s in zip(
        class_names, report.precision, report.recall, report.f1, report.support
    ):
        lines.append(f"{name:<12} {p:>9.4f} {r:>9.4f} {f:>9.4f} {s:>8d}")
    lines.append("")
    lines.append(f"F1 micro:    {report.micro:.4f}")
    lines.append(f"F1 macro:    {report.macro:.4f}")
    lines.append(f"F1 weighted: {report.weighted:.4f}")
    return "\n".join(lines)


def format_detection_eval(ev: DetectionEval) -> str:
    lines = [f"{'class':<8} {'AP50':>8} {'AP50-95':>8}"]
    for c, by_thr in sorted(ev.per_class.items()):
        ap50 = by_thr[0.50]
        ap_mean = sum(by_thr.values()) / len(by_thr)
        lines.append(f"{c:<8} {ap50:>8.4f} {ap_mean:>8.4f}")
    lines.append("")
    lines.append(f"mAP50:    {ev.map50:.4f}")
    lines.append(f"mAP50-95: {ev.map50_95:.4f}")
    return "\n".join(lines)
