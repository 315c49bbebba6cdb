"""End-to-end orchestration: detect, crop + OCR, classify, structured output.

A run either rasterizes the document and goes through the detector/recognizer
ports, or short-circuits through the embedded-text layer when one exists and
prefer_mined is set. Failures surface as StageError naming the stage, page,
and region.
"""

from __future__ import annotations

import datetime as _dt
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import detect as _detect
from . import ingest as _ingest
from . import ocr as _ocr
from .classify import embed, head_forward, load_head, softmax
from .corpus import CLASS_NAMES
from .ingest import RendererPort, TextMinerPort
from .ports import load_detector_port, load_embedding_port, load_recognizer_port
from .textprep import DEFAULT_RULES, normalize
from .tokenizers import build_tokenizer

SCHEMA_VERSION = 1

MODEL_DIR_ENV = "RESUME_IE_MODEL_DIR"


class ConfigError(Exception):
    """Invalid pipeline configuration; raised before any work starts."""


class StageError(Exception):
    """A pipeline stage failed."""

    def __init__(
        self,
        stage: str,
        message: str,
        page: int | None = None,
        region: int | None = None,
    ):
        self.stage = stage
        self.page = page
        self.region = region
        where = stage
        if page is not None:
            where += f", page {page}"
        if region is not None:
            where += f", region {region}"
        super().__init__(f"[{where}] {message}")


@dataclass(frozen=True)
class PipelineConfig:
    detector: Path
    recognizer: Path
    backbone: Path
    head: Path
    vocab: Path
    charset: Path
    merges: Path | None = None
    tokenizer: str = "distilbert"
    pooling: str | None = None
    conf_threshold: float = 0.25
    nms_iou: float = 0.45
    margin: int = 2
    dpi: int = 150
    seed: int = 0
    prefer_mined: bool = False
    deterministic: bool = False
    merge_labels: bool = False


_CONFIG_PATH_FIELDS = ("detector", "recognizer", "backbone", "head", "vocab", "charset")


def resolve_artifact(path: str | Path) -> Path:
    """Resolve a model/vocab path, falling back to $RESUME_IE_MODEL_DIR."""
    path = Path(path)
    if path.is_file():
        return path
    root = os.environ.get(MODEL_DIR_ENV)
    if root:
        candidate = Path(root) / path
        if candidate.is_file():
            return candidate
    raise ConfigError(f"artifact not found: {path}")


def validate_config(config: PipelineConfig) -> PipelineConfig:
    """Resolve artifact paths (falling back to $RESUME_IE_MODEL_DIR) and check
    every referenced file exists before any processing."""
    resolved = {}
    for name in _CONFIG_PATH_FIELDS:
        resolved[name] = resolve_artifact(getattr(config, name))
    if config.merges is not None:
        resolved["merges"] = resolve_artifact(config.merges)
    if not 0.0 <= config.conf_threshold <= 1.0:
        raise ConfigError(f"conf_threshold {config.conf_threshold} outside [0, 1]")
    if not 0.0 < config.nms_iou <= 1.0:
        raise ConfigError(f"nms_iou {config.nms_iou} outside (0, 1]")
    if config.margin < 0:
        raise ConfigError("margin must be non-negative")
    return replace(config, **resolved)


def load_config_file(path: str | Path) -> dict[str, str]:
    """Plain key-value config: one "key = value" per line, "#" comments."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


@dataclass(frozen=True)
class Section:
    label: str
    probabilities: tuple[float, ...]
    text: str
    normalized_text: str
    boxes: tuple[tuple[float, float, float, float], ...]
    page: int
    order: int
    ocr_confidence: float | None

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "probabilities": list(self.probabilities),
            "text": self.text,
            "normalized_text": self.normalized_text,
            "boxes": [list(b) for b in self.boxes],
            "page": self.page,
            "order": self.order,
            "ocr_confidence": self.ocr_confidence,
        }


@dataclass(frozen=True)
class ResumeExtraction:
    document_id: str
    sections: tuple[Section, ...]
    pipeline_meta: dict

    def as_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "document_id": self.document_id,
            "sections": [s.as_dict() for s in self.sections],
            "pipeline_meta": self.pipeline_meta,
        }


def validate_extraction(doc: dict) -> None:
    """Schema check for the machine-readable output document."""
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"schema_version must be {SCHEMA_VERSION}")
    if not isinstance(doc.get("document_id"), str) or not doc["document_id"]:
        raise ValueError("document_id must be a non-empty string")
    sections = doc.get("sections")
    if not isinstance(sections, list):
        raise ValueError("sections must be a list")
    for i, sec in enumerate(sections):
        if sec.get("label") not in CLASS_NAMES:
            raise ValueError(f"sections[{i}].label {sec.get('label')!r} is not a class name")
        probs = sec.get("probabilities")
        if (
            not isinstance(probs, list)
            or len(probs) != len(CLASS_NAMES)
            or abs(sum(probs) - 1.0) > 1e-6
        ):
            raise ValueError(f"sections[{i}].probabilities must be {len(CLASS_NAMES)} values summing to 1")
        if not isinstance(sec.get("text"), str):
            raise ValueError(f"sections[{i}].text must be a string")
        boxes = sec.get("boxes")
        if not isinstance(boxes, list) or any(len(b) != 4 for b in boxes):
            raise ValueError(f"sections[{i}].boxes must be a list of 4-value boxes")
        if not isinstance(sec.get("page"), int) or sec["page"] < 0:
            raise ValueError(f"sections[{i}].page must be a non-negative integer")
        if sec.get("order") != i:
            raise ValueError(f"sections[{i}].order must equal its position")
    meta = doc.get("pipeline_meta")
    if not isinstance(meta, dict) or "models" not in meta or "thresholds" not in meta:
        raise ValueError("pipeline_meta must carry models and thresholds")


def _merge_same_label(sections: list[Section]) -> list[Section]:
    merged: list[Section] = []
    for sec in sections:
        if merged and merged[-1].label == sec.label and merged[-1].page == sec.page:
            prev = merged[-1]
            probs = tuple(
                (a + b) / 2.0 for a, b in zip(prev.probabilities, sec.probabilities)
            )
            total = sum(probs)
            merged[-1] = replace(
                prev,
                probabilities=tuple(p / total for p in probs),
                text=f"{prev.text} {sec.text}",
                normalized_text=f"{prev.normalized_text} {sec.normalized_text}".strip(),
                boxes=prev.boxes + sec.boxes,
                ocr_confidence=(
                    None
                    if prev.ocr_confidence is None or sec.ocr_confidence is None
                    else (prev.ocr_confidence + sec.ocr_confidence) / 2.0
                ),
            )
        else:
            merged.append(sec)
    return [replace(s, order=i) for i, s in enumerate(merged)]


def run_pipeline(
    document: str | Path,
    config: PipelineConfig,
    renderer: RendererPort | None = None,
    miner: TextMinerPort | None = None,
) -> ResumeExtraction:
    """Run detect -> crop+OCR -> classify (or the text-mining short circuit)
    over one document and emit the structured extraction."""
    document = Path(document)
    config = validate_config(config)

    try:
        charset = _ocr.load_charset(config.charset)
        tokenizer = build_tokenizer(config.tokenizer, config.vocab, config.merges)
        head = load_head(config.head)
        embedding_port = load_embedding_port(config.backbone, pooling=config.pooling)
        detector_port = load_detector_port(config.detector)
        recognizer_port = load_recognizer_port(config.recognizer, charset)
    except Exception as e:
        raise ConfigError(f"cannot load pipeline artifacts: {e}") from e

    def classify_text(text: str) -> tuple[str, tuple[float, ...], str]:
        normalized = normalize(text, DEFAULT_RULES)
        seq = tokenizer.encode(normalized)
        vector = embed(seq, embedding_port)
        probs = softmax(head_forward(vector, head, train_mode=False))
        return CLASS_NAMES[int(np.argmax(probs))], tuple(float(p) for p in probs), normalized

    sections: list[Section] = []
    mined = False

    if config.prefer_mined:
        try:
            blocks = _ingest.mine_text(document, miner=miner)
        except _ingest.IngestError as e:
            raise StageError("mine", str(e)) from e
        if blocks:
            mined = True
            for i, block in enumerate(blocks):
                try:
                    label, probs, normalized = classify_text(block.text)
                except Exception as e:
                    raise StageError("classify", str(e), page=block.page, region=i) from e
                sections.append(
                    Section(
                        label=label,
                        probabilities=probs,
                        text=block.text,
                        normalized_text=normalized,
                        boxes=(block.bbox,) if block.bbox else (),
                        page=block.page,
                        order=len(sections),
                        ocr_confidence=None,
                    )
                )

    if not mined:
        try:
            pages = _ingest.rasterize(document, dpi=config.dpi, renderer=renderer)
        except _ingest.IngestError as e:
            raise StageError("rasterize", str(e)) from e

        for page in pages:
            try:
                raw = detector_port.infer(page)
                regions = _detect.decode(raw, conf_threshold=config.conf_threshold)
                regions = _detect.nms(regions, iou_threshold=config.nms_iou)
                ordered = _detect.reading_order(regions)
            except Exception as e:
                raise StageError("detect", str(e), page=page.source_page) from e

            try:
                results = _ocr.recognize(
                    page, ordered, recognizer_port, charset, margin=config.margin
                )
            except _ocr.RecognitionError as e:
                raise StageError(
                    "ocr", str(e), page=page.source_page, region=e.region_index
                ) from e

            for i, result in enumerate(results):
                if not result.text:
                    continue
                try:
                    label, probs, normalized = classify_text(result.text)
                except Exception as e:
                    raise StageError(
                        "classify", str(e), page=page.source_page, region=i
                    ) from e
                sections.append(
                    Section(
                        label=label,
                        probabilities=probs,
                        text=result.text,
                        normalized_text=normalized,
                        boxes=(_ingest.unletterbox(result.region.box, page),),
                        page=page.source_page,
                        order=len(sections),
                        ocr_confidence=result.mean_confidence,
                    )
                )

    if config.merge_labels:
        sections = _merge_same_label(sections)

    meta: dict = {
        "models": {
            "detector": str(config.detector),
            "recognizer": str(config.recognizer),
            "backbone": str(config.backbone),
            "head": str(config.head),
        },
        "thresholds": {
            "conf_threshold": config.conf_threshold,
            "nms_iou": config.nms_iou,
            "margin": config.margin,
        },
        "tokenizer": config.tokenizer,
        "pooling": config.pooling,
        "seed": config.seed,
        "text_source": "mined" if mined else "ocr",
    }
    if not config.deterministic:
        meta["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()

    return ResumeExtraction(
        document_id=document.name,
        sections=tuple(sections),
        pipeline_meta=meta,
    )
