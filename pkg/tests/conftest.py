from __future__ import annotations

import random
from pathlib import Path

import pytest

from resume_ie.corpus import CLASS_NAMES, SectionRecord, label_from_id

FIXTURES = Path(__file__).parent / "fixtures"


def make_records(
    n_persons: int,
    records_per_person: int = 2,
    seed: int = 0,
) -> list[SectionRecord]:
    rng = random.Random(seed)
    records = []
    for p in range(n_persons):
        for r in range(records_per_person):
            label = label_from_id(rng.randrange(len(CLASS_NAMES)))
            records.append(
                SectionRecord(
                    record_id=f"p{p:04d}r{r}",
                    person_id=f"person-{p:04d}",
                    label=label,
                    text=f"sample {label.name} text {p} {r}",
                )
            )
    return records


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def write_dataset_file(path: Path, rows: list[dict]) -> Path:
    import json

    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    return path


def record_row(i: int, person: str, label: str, text: str) -> dict:
    return {"record_id": f"r{i:05d}", "person_id": person, "label": label, "text": text}


def write_minimal_pdf(path: Path, pages: list[list[str]], compress: bool = False) -> None:
    """Hand-built PDF: one content stream per page, one BT/ET block per text."""
    import io
    import zlib

    objects: list[bytes] = []
    page_object_ids = []
    content_object_ids = []
    next_id = 3  # 1 = catalog, 2 = pages root
    for _ in pages:
        page_object_ids.append(next_id)
        content_object_ids.append(next_id + 1)
        next_id += 2

    kids = " ".join(f"{oid} 0 R" for oid in page_object_ids)
    objects.append(b"1 0 obj\n<< /Type /Catalog /Pages 2 0 R >>\nendobj\n")
    objects.append(
        f"2 0 obj\n<< /Type /Pages /Kids [{kids}] /Count {len(pages)} >>\nendobj\n".encode()
    )
    for page_id, content_id, texts in zip(page_object_ids, content_object_ids, pages):
        objects.append(
            (
                f"{page_id} 0 obj\n<< /Type /Page /Parent 2 0 R "
                f"/MediaBox [0 0 612 792] /Contents {content_id} 0 R >>\nendobj\n"
            ).encode()
        )
        stream_parts = []
        for i, text in enumerate(texts):
            escaped = text.replace("\\", r"\\").replace("(", r"\(").replace(")", r"\)")
            stream_parts.append(f"BT /F1 12 Tf 72 {700 - 20 * i} Td ({escaped}) Tj ET")
        stream = "\n".join(stream_parts).encode("latin-1")
        filter_entry = ""
        if compress:
            stream = zlib.compress(stream)
            filter_entry = " /Filter /FlateDecode"
        objects.append(
            f"{content_id} 0 obj\n<< /Length {len(stream)}{filter_entry} >>\nstream\n".encode()
            + stream
            + b"\nendstream\nendobj\n"
        )

    out = io.BytesIO()
    out.write(b"%PDF-1.4\n")
    for obj in objects:
        out.write(obj)
    out.write(b"%%EOF\n")
    path.write_bytes(out.getvalue())
