#!/usr/bin/env python3
"""Regenerate the checked-in end-to-end fixtures under tests/fixtures/e2e/.

Deterministic: rerunning produces byte-identical artifacts. The fixture set
is a synthetic one-page resume plus stub ports (JSON) and a head checkpoint
trained on the five section texts, so the full parse pipeline runs with no
real models.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from PIL import Image, ImageDraw

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from resume_ie.classify import (  # noqa: E402
    EncodedDataset,
    TrainConfig,
    predict,
    save_head,
    train_head,
)
from resume_ie.corpus import CLASS_NAMES  # noqa: E402
from resume_ie.ports import StubEmbeddingPort  # noqa: E402
from resume_ie.textprep import normalize  # noqa: E402
from resume_ie.tokenizers import WordPieceTokenizer, load_wordpiece_vocab  # noqa: E402

OUT_DIR = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "e2e"

EMBED_DIM = 32
EMBED_SEED = 20240601
HEAD_SEED = 7

# Section bands in reading order; every box has a distinct size so the stub
# recognizer can key crops by "WxH".
SECTIONS = [
    ("education", (30, 40, 610, 140),
     "EDUCATION University of Example Masters of Science May 2016 May 2020 "
     "Masters in Computer Science GPA 3.35"),
    ("experience", (30, 160, 600, 262),
     "WORK EXPERIENCE Senior Software Engineer Jan 2019 Present Analyze user "
     "needs and design software solutions"),
    ("skill", (30, 285, 590, 365),
     "SKILLS C++ Python C# Microsoft Word Excel PowerPoint Amazon AWS Azure"),
    ("language", (30, 390, 500, 450),
     "LANGUAGE Turkish English"),
    ("personal", (30, 470, 580, 600),
     "PERSONAL PROFILE Office Address 123 Anywhere St Any City "
     "Email example@mail.com LinkedIn example"),
]

MARGIN = 2


def make_page_image(path: Path) -> None:
    image = Image.new("RGB", (640, 640), "white")
    draw = ImageDraw.Draw(image)
    for i, (_, box, _) in enumerate(SECTIONS):
        x1, y1, x2, y2 = box
        draw.rectangle((x1, y1, x2, y2), outline=(120, 120, 120))
        # fake text lines inside the band
        y = y1 + 10
        shade = 40 + 30 * i
        while y < y2 - 8:
            draw.line((x1 + 8, y, x2 - 8, y), fill=(shade, shade, shade), width=3)
            y += 14
    image.save(path)


def make_detector(path: Path) -> None:
    rows = []
    for _, (x1, y1, x2, y2), _ in SECTIONS:
        rows.append([(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1, 0.9])
    path.write_text(
        json.dumps({"type": "fixed_boxes", "columns": 5, "boxes": {"0": rows}}, indent=2)
        + "\n"
    )


def make_recognizer(path: Path) -> None:
    by_size = {}
    for _, (x1, y1, x2, y2), text in SECTIONS:
        w = (x2 + MARGIN) - (x1 - MARGIN)
        h = (y2 + MARGIN) - (y1 - MARGIN)
        by_size[f"{w}x{h}"] = text
    assert len(by_size) == len(SECTIONS), "crop sizes must be distinct"
    path.write_text(
        json.dumps({"type": "text_table", "by_size": by_size, "default": ""}, indent=2)
        + "\n"
    )


def make_charset(path: Path) -> None:
    chars = sorted({ch for _, _, text in SECTIONS for ch in text})
    path.write_text("\n".join(chars) + "\n")


def make_vocab(path: Path) -> None:
    words = sorted({w for _, _, text in SECTIONS for w in normalize(text).split()})
    tokens = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", *words]
    path.write_text("\n".join(tokens) + "\n")


def make_embedding(path: Path) -> None:
    path.write_text(
        json.dumps(
            {"type": "hashed_bag", "dim": EMBED_DIM, "seed": EMBED_SEED, "pooling": "mean"},
            indent=2,
        )
        + "\n"
    )


def make_head(out_dir: Path) -> None:
    tokenizer = WordPieceTokenizer(load_wordpiece_vocab(out_dir / "wordpiece.vocab"))
    port = StubEmbeddingPort(out_dir / "embedding.json")
    sequences, labels = [], []
    for label, _, text in SECTIONS:
        sequences.append(tokenizer.encode(normalize(text)))
        labels.append(CLASS_NAMES.index(label))
    data = EncodedDataset(sequences=sequences, labels=labels)
    config = TrainConfig(
        lr=0.01, batch_size=5, max_epochs=300, patience=300,
        seed=HEAD_SEED, hidden_dim=32, dropout_p=0.1,
    )
    head, history = train_head(data, data, port, config)
    save_head(head, out_dir / "head.bin")
    for label, _, text in SECTIONS:
        got, _ = predict(text, tokenizer, port, head)
        assert got.name == label, f"fixture head misclassifies {label} as {got.name}"
    print(f"head trained: {len(history)} epochs, final val F1 "
          f"{history[-1]['val_f1_macro']:.3f}")


def make_config(path: Path) -> None:
    path.write_text(
        "\n".join(
            [
                "# artifact paths resolve against $RESUME_IE_MODEL_DIR",
                "detector = detector.json",
                "recognizer = recognizer.json",
                "backbone = embedding.json",
                "head = head.bin",
                "vocab = wordpiece.vocab",
                "charset = charset.txt",
                "tokenizer = distilbert",
                "conf_threshold = 0.25",
                "nms_iou = 0.45",
                "margin = 2",
                "deterministic = true",
            ]
        )
        + "\n"
    )


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    make_page_image(OUT_DIR / "resume.png")
    make_detector(OUT_DIR / "detector.json")
    make_recognizer(OUT_DIR / "recognizer.json")
    make_charset(OUT_DIR / "charset.txt")
    make_vocab(OUT_DIR / "wordpiece.vocab")
    make_embedding(OUT_DIR / "embedding.json")
    make_head(OUT_DIR)
    make_config(OUT_DIR / "pipeline.cfg")
    print(f"fixtures written to {OUT_DIR}")


if __name__ == "__main__":
    main()
