"""Inference-port implementations and file-based loaders.

Two backends share each port contract: ".json" files load deterministic stub
ports (checked-in fixtures; no ML runtime needed), and ".pt"/".ts" files load
TorchScript networks exported by the model-export tool (requires the optional
torch dependency).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .ingest import PageImage
from .ocr import Charset
from .tokenizers import MAX_LEN, TokenSequence

_TORCHSCRIPT_SUFFIXES = {".pt", ".ts"}


class PortLoadError(Exception):
    pass


def _load_json(path: Path, expected_type: str) -> dict:
    try:
        spec = json.loads(path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise PortLoadError(f"cannot read stub port {path}: {e}") from e
    if spec.get("type") != expected_type:
        raise PortLoadError(
            f"{path}: stub type {spec.get('type')!r}, expected {expected_type!r}"
        )
    return spec


def _torch():
    try:
        import torch
    except ImportError as e:
        raise PortLoadError(
            "loading TorchScript models requires the optional torch dependency"
        ) from e
    return torch


class StubDetectorPort:
    """Fixed raw detections per page index, from a JSON fixture."""

    def __init__(self, path: str | Path):
        spec = _load_json(Path(path), "fixed_boxes")
        self._by_page = {int(k): np.asarray(v, dtype=np.float64)
                         for k, v in spec["boxes"].items()}
        self._columns = int(spec.get("columns", 5))

    def infer(self, page: PageImage) -> np.ndarray:
        rows = self._by_page.get(page.source_page)
        if rows is None or rows.size == 0:
            return np.zeros((0, self._columns), dtype=np.float64)
        return rows.copy()


class StubRecognizerPort:
    """Crop-size-keyed text table that synthesizes clean CTC logits.

    The fixture detector's boxes have distinct sizes, so "WxH" keys identify
    regions without any real recognition.
    """

    _HIGH = 12.0

    def __init__(self, path: str | Path, charset: Charset):
        spec = _load_json(Path(path), "text_table")
        self._by_size = dict(spec.get("by_size", {}))
        self._default = spec.get("default", "")
        self._charset = charset

    def _logits_for(self, text: str) -> np.ndarray:
        indices: list[int] = []
        prev = None
        for ch in text:
            idx = self._charset.index_of(ch)
            if idx == prev:
                indices.append(0)
            indices.append(idx)
            prev = idx
        if not indices:
            indices = [0]
        logits = np.zeros((len(indices), len(self._charset) + 1), dtype=np.float64)
        for t, idx in enumerate(indices):
            logits[t, idx] = self._HIGH
        return logits

    def infer(self, crop: np.ndarray) -> np.ndarray:
        h, w = np.asarray(crop).shape[:2]
        text = self._by_size.get(f"{w}x{h}", self._default)
        return self._logits_for(text)


class StubEmbeddingPort:
    """Deterministic hashed bag-of-tokens embedding.

    Every token id maps to a fixed pseudo-random vector; the hidden state at
    position i is the vector of ids[i]. Mean pooling therefore yields a
    bag-of-tokens representation.
    """

    def __init__(self, path: str | Path, pooling: str | None = None):
        spec = _load_json(Path(path), "hashed_bag")
        self.hidden_dim = int(spec["dim"])
        self.pooling = pooling or spec.get("pooling", "mean")
        self._seed = int(spec.get("seed", 0))
        self._cache: dict[int, np.ndarray] = {}

    def _vector(self, token_id: int) -> np.ndarray:
        vec = self._cache.get(token_id)
        if vec is None:
            rng = np.random.default_rng((self._seed, token_id))
            vec = rng.standard_normal(self.hidden_dim)
            self._cache[token_id] = vec
        return vec

    def hidden_states(self, seq: TokenSequence) -> np.ndarray:
        return np.stack([self._vector(tid) for tid in seq.ids])


class TorchScriptDetectorPort:
    """Runs an exported detector: (1,3,640,640) float image -> (1,N,4+C)."""

    def __init__(self, path: str | Path):
        self._torch = _torch()
        self._model = self._torch.jit.load(str(path), map_location="cpu").eval()

    def infer(self, page: PageImage) -> np.ndarray:
        x = self._torch.from_numpy(
            np.ascontiguousarray(page.pixels, dtype=np.float32) / 255.0
        ).permute(2, 0, 1)[None]
        with self._torch.no_grad():
            out = self._model(x)
        return out[0].numpy().astype(np.float64)


class TorchScriptRecognizerPort:
    """Runs an exported recognizer: (1,3,H,W) float crop -> (1,T,S+1) logits."""

    def __init__(self, path: str | Path):
        self._torch = _torch()
        self._model = self._torch.jit.load(str(path), map_location="cpu").eval()

    def infer(self, crop: np.ndarray) -> np.ndarray:
        x = self._torch.from_numpy(
            np.ascontiguousarray(crop, dtype=np.float32) / 255.0
        ).permute(2, 0, 1)[None]
        with self._torch.no_grad():
            out = self._model(x)
        return out[0].numpy().astype(np.float64)


class TorchScriptEmbeddingPort:
    """Runs an exported frozen backbone: (1,75) ids + mask -> (1,75,D)."""

    def __init__(self, path: str | Path, pooling: str = "cls"):
        self._torch = _torch()
        self._model = self._torch.jit.load(str(path), map_location="cpu").eval()
        self.pooling = pooling
        probe = TokenSequence(
            ids=(0,) * MAX_LEN, mask=(1,) + (0,) * (MAX_LEN - 1), true_length=1
        )
        self.hidden_dim = int(self._run(probe).shape[1])

    def _run(self, seq: TokenSequence) -> np.ndarray:
        ids = self._torch.tensor([list(seq.ids)], dtype=self._torch.int64)
        mask = self._torch.tensor([list(seq.mask)], dtype=self._torch.int64)
        with self._torch.no_grad():
            out = self._model(ids, mask)
        return out[0].numpy().astype(np.float64)

    def hidden_states(self, seq: TokenSequence) -> np.ndarray:
        return self._run(seq)


def load_detector_port(path: str | Path):
    path = Path(path)
    if path.suffix == ".json":
        return StubDetectorPort(path)
    if path.suffix in _TORCHSCRIPT_SUFFIXES:
        return TorchScriptDetectorPort(path)
    raise PortLoadError(f"unsupported detector model format: {path.suffix!r}")


def load_recognizer_port(path: str | Path, charset: Charset):
    path = Path(path)
    if path.suffix == ".json":
        return StubRecognizerPort(path, charset)
    if path.suffix in _TORCHSCRIPT_SUFFIXES:
        return TorchScriptRecognizerPort(path)
    raise PortLoadError(f"unsupported recognizer model format: {path.suffix!r}")


def load_embedding_port(path: str | Path, pooling: str | None = None):
    path = Path(path)
    if path.suffix == ".json":
        return StubEmbeddingPort(path, pooling=pooling)
    if path.suffix in _TORCHSCRIPT_SUFFIXES:
        return TorchScriptEmbeddingPort(path, pooling=pooling or "cls")
    raise PortLoadError(f"unsupported backbone model format: {path.suffix!r}")
