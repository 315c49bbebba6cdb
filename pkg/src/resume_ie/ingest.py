"""Document ingestion: 640x640 letterboxed page images and embedded-text mining.

Plain raster images are handled natively; PDFs are rasterized through a
renderer port. Born-digital PDFs can instead be text-mined in repo (simple
uncompressed or Flate content streams); DOC files are mined through a port.
"""

from __future__ import annotations

import base64
import re
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

PAGE_SIZE = 640
PAD_VALUE = 114

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


class IngestError(Exception):
    """Unreadable or unsupported input document."""


class UnsupportedDocumentError(IngestError):
    pass


@dataclass(frozen=True)
class PageImage:
    """One page letterboxed to PAGE_SIZE, with the inverse-transform data."""

    pixels: np.ndarray
    scale: float
    pad: tuple[int, int]
    source_page: int
    source_size: tuple[int, int]

    def __post_init__(self) -> None:
        h, w = self.pixels.shape[:2]
        if (h, w) != (PAGE_SIZE, PAGE_SIZE) or self.pixels.shape[2:] != (3,):
            raise IngestError(f"page pixels must be {PAGE_SIZE}x{PAGE_SIZE}x3, got {self.pixels.shape}")
        if self.scale <= 0:
            raise IngestError("letterbox scale must be positive")
        if self.pad[0] < 0 or self.pad[1] < 0:
            raise IngestError("letterbox pads must be non-negative")


@dataclass(frozen=True)
class RawTextBlock:
    """Embedded text mined from a born-digital document."""

    text: str
    page: int
    bbox: tuple[float, float, float, float] | None = None

    def __post_init__(self) -> None:
        if not self.text:
            raise IngestError("text block must be non-empty")


class RendererPort(Protocol):
    """Renders document pages to H x W x 3 uint8 arrays.

    Instances are exclusive-use per worker unless documented reentrant.
    """

    def render(self, path: Path, dpi: int) -> Sequence[np.ndarray]: ...


class TextMinerPort(Protocol):
    """Extracts embedded text blocks from a word-processing document."""

    def mine(self, path: Path) -> Sequence[RawTextBlock]: ...


def letterbox(pixels: np.ndarray, source_page: int = 0) -> PageImage:
    """Aspect-preserving resize onto a grey PAGE_SIZE canvas."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise IngestError(f"expected HxWx3 pixels, got shape {pixels.shape}")
    h, w = pixels.shape[:2]
    if h == 0 or w == 0:
        raise IngestError("empty image")
    scale = PAGE_SIZE / max(h, w)
    content_w = max(1, round(w * scale))
    content_h = max(1, round(h * scale))
    if (content_w, content_h) != (w, h):
        resized = np.asarray(
            Image.fromarray(pixels.astype(np.uint8)).resize(
                (content_w, content_h), Image.BILINEAR
            )
        )
    else:
        resized = pixels.astype(np.uint8)
    pad_left = (PAGE_SIZE - content_w) // 2
    pad_top = (PAGE_SIZE - content_h) // 2
    canvas = np.full((PAGE_SIZE, PAGE_SIZE, 3), PAD_VALUE, dtype=np.uint8)
    canvas[pad_top : pad_top + content_h, pad_left : pad_left + content_w] = resized
    return PageImage(
        pixels=canvas,
        scale=scale,
        pad=(pad_left, pad_top),
        source_page=source_page,
        source_size=(w, h),
    )


def rasterize(
    document: str | Path, dpi: int = 150, renderer: RendererPort | None = None
) -> list[PageImage]:
    """Turn a document into letterboxed page images.

    Images are read directly (the shipped fallback); PDFs need a renderer
    port. DOC files are never rasterized.
    """
    path = Path(document)
    if not path.is_file():
        raise IngestError(f"document not found: {path}")
    suffix = path.suffix.lower()
    if suffix in _IMAGE_SUFFIXES:
        try:
            with Image.open(path) as img:
                pixels = np.asarray(img.convert("RGB"))
        except (UnidentifiedImageError, OSError) as e:
            raise IngestError(f"cannot read image {path}: {e}") from e
        return [letterbox(pixels, source_page=0)]
    if suffix == ".pdf":
        if renderer is None:
            raise IngestError(
                f"rasterizing {path} requires a PDF renderer port; none configured"
            )
        pages = renderer.render(path, dpi)
        return [letterbox(np.asarray(p), source_page=i) for i, p in enumerate(pages)]
    if suffix == ".doc":
        raise UnsupportedDocumentError(
            "DOC files are word-processing documents; use mine_text, not rasterize"
        )
    raise UnsupportedDocumentError(f"unsupported document type: {suffix!r}")


def unletterbox(
    box: tuple[float, float, float, float], page: PageImage
) -> tuple[float, float, float, float]:
    """Map a box from letterboxed PAGE_SIZE space back to source-page pixels."""
    x1, y1, x2, y2 = box
    pad_left, pad_top = page.pad
    src_w, src_h = page.source_size

    def back_x(x: float) -> float:
        return min(max((x - pad_left) / page.scale, 0.0), float(src_w))

    def back_y(y: float) -> float:
        return min(max((y - pad_top) / page.scale, 0.0), float(src_h))

    return (back_x(x1), back_y(y1), back_x(x2), back_y(y2))


def mine_text(
    document: str | Path, miner: TextMinerPort | None = None
) -> list[RawTextBlock]:
    """Extract embedded text blocks in document order.

    An empty result means there is no text layer and the caller should fall
    back to the OCR path; unreadable files raise instead.
    """
    path = Path(document)
    if not path.is_file():
        raise IngestError(f"document not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".pdf":
        return _pdf_text_blocks(path)
    if suffix == ".doc":
        if miner is None:
            raise IngestError(
                f"mining {path} requires a DOC text-mining port; none configured"
            )
        return list(miner.mine(path))
    if suffix in _IMAGE_SUFFIXES:
        raise IngestError(
            f"{path} is a raster image with no text layer; use the OCR path"
        )
    raise UnsupportedDocumentError(f"unsupported document type: {suffix!r}")


# --- minimal PDF text extraction -------------------------------------------

_OBJ_RE = re.compile(rb"(\d+)\s+\d+\s+obj(.*?)endobj", re.S)
_STREAM_RE = re.compile(rb"stream\r?\n(.*?)\s*endstream", re.S)
_TEXT_BLOCK_RE = re.compile(rb"BT(.*?)ET", re.S)
_SHOW_RE = re.compile(rb"\((?:\\.|[^()\\])*\)|<[0-9A-Fa-f\s]*>")

_ESCAPES = {
    b"n": b"\n", b"r": b"\r", b"t": b"\t", b"b": b"\b", b"f": b"\f",
    b"(": b"(", b")": b")", b"\\": b"\\",
}


def _decode_pdf_string(raw: bytes) -> str:
    if raw.startswith(b"<"):
        hexdigits = re.sub(rb"\s", b"", raw[1:-1])
        if len(hexdigits) % 2:
            hexdigits += b"0"
        return bytes.fromhex(hexdigits.decode("ascii")).decode("latin-1")
    out = bytearray()
    i = 1
    end = len(raw) - 1
    while i < end:
        c = raw[i : i + 1]
        if c == b"\\" and i + 1 < end:
            nxt = raw[i + 1 : i + 2]
            if nxt in _ESCAPES:
                out += _ESCAPES[nxt]
                i += 2
                continue
            digits = b""
            for ch in raw[i + 1 : i + 4]:
                if chr(ch) in "01234567":
                    digits += bytes([ch])
                else:
                    break
            if digits:
                out.append(int(digits, 8) & 0xFF)
                i += 1 + len(digits)
                continue
            i += 1
            continue
        out += c
        i += 1
    return out.decode("latin-1")


def _decode_stream(body: bytes, payload: bytes) -> bytes | None:
    """Apply the declared filter chain; None for unsupported filters."""
    filters = re.findall(rb"/(ASCII85Decode|FlateDecode|\w+Decode)", body)
    for name in filters:
        if name == b"ASCII85Decode":
            try:
                payload = base64.a85decode(payload.strip(), adobe=True)
            except ValueError:
                return None
        elif name == b"FlateDecode":
            try:
                payload = zlib.decompress(payload)
            except zlib.error:
                return None
        else:
            return None
    return payload


def _object_streams(data: bytes) -> dict[int, bytes]:
    streams: dict[int, bytes] = {}
    for m in _OBJ_RE.finditer(data):
        num = int(m.group(1))
        body = m.group(2)
        sm = _STREAM_RE.search(body)
        if not sm:
            continue
        payload = _decode_stream(body[: sm.start()], sm.group(1))
        if payload is not None:
            streams[num] = payload
    return streams


def _page_content_objects(data: bytes) -> list[list[int]]:
    """Content-stream object numbers per page, in page order."""
    pages: list[list[int]] = []
    for m in _OBJ_RE.finditer(data):
        body = m.group(2)
        if not re.search(rb"/Type\s*/Page[^s]", body + b" "):
            continue
        contents = re.search(rb"/Contents\s+(\[[^\]]*\]|\d+\s+\d+\s+R)", body)
        if not contents:
            pages.append([])
            continue
        refs = [int(n) for n in re.findall(rb"(\d+)\s+\d+\s+R", contents.group(1))]
        pages.append(refs)
    return pages


def _blocks_from_content(content: bytes, page_index: int) -> list[RawTextBlock]:
    blocks: list[RawTextBlock] = []
    for bm in _TEXT_BLOCK_RE.finditer(content):
        parts = [
            _decode_pdf_string(sm.group(0)) for sm in _SHOW_RE.finditer(bm.group(1))
        ]
        text = " ".join(p for p in (s.strip() for s in parts) if p)
        if text:
            blocks.append(RawTextBlock(text=text, page=page_index))
    return blocks


def _pdf_text_blocks(path: Path) -> list[RawTextBlock]:
    data = path.read_bytes()
    if not data.startswith(b"%PDF"):
        raise IngestError(f"{path} is not a PDF file")
    streams = _object_streams(data)
    pages = _page_content_objects(data)
    blocks: list[RawTextBlock] = []
    if pages:
        for page_index, refs in enumerate(pages):
            for ref in refs:
                if ref in streams:
                    blocks.extend(_blocks_from_content(streams[ref], page_index))
    else:
        # No parseable page tree: treat each content stream as one page.
        for page_index, num in enumerate(sorted(streams)):
            blocks.extend(_blocks_from_content(streams[num], page_index))
    return blocks
