"""Exported fixture models must load through every primary inference port."""

from __future__ import annotations

import numpy as np
import pytest

pytest.importorskip("resume_ie")

from resume_ie.classify import embed  # noqa: E402
from resume_ie.detect import decode, reading_order, nms  # noqa: E402
from resume_ie.ingest import letterbox  # noqa: E402
from resume_ie.ocr import crop, ctc_greedy_decode, load_charset, recognize  # noqa: E402
from resume_ie.ports import (  # noqa: E402
    load_detector_port,
    load_embedding_port,
    load_recognizer_port,
)
from resume_ie.tokenizers import (  # noqa: E402
    build_tokenizer,
)

from model_export.exporters import export_backbone, export_detector, export_recognizer  # noqa: E402


@pytest.fixture(scope="module")
def export_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("exports")
    for name in ("bert", "distilbert", "roberta", "xlnet"):
        export_backbone(name, out)
    export_detector("small", out, boxes_cxcywh=[[320.0, 90.0, 580.0, 100.0]])
    export_recognizer(out)
    return out


def fixture_page():
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 255, size=(640, 640, 3), dtype=np.uint8)
    return letterbox(pixels)


class TestDetectorPort:
    def test_loads_and_detects_the_fixed_box(self, export_dir):
        port = load_detector_port(export_dir / "detector_small_fixture.pt")
        raw = port.infer(fixture_page())
        regions = reading_order(nms(decode(raw, conf_threshold=0.25), 0.45))
        assert len(regions) == 1
        assert regions[0].box == (30.0, 40.0, 610.0, 140.0)


class TestRecognizerPort:
    def test_loads_and_decodes_skills(self, export_dir):
        charset = load_charset(export_dir / "charset.txt")
        port = load_recognizer_port(export_dir / "recognizer_fixture.pt", charset)
        page = fixture_page()
        detector = load_detector_port(export_dir / "detector_small_fixture.pt")
        regions = reading_order(decode(detector.infer(page), 0.25))
        results = recognize(page, regions, port, charset)
        assert [r.text for r in results] == ["skills"]
        assert results[0].mean_confidence > 0.9

    def test_direct_logits_decode(self, export_dir):
        charset = load_charset(export_dir / "charset.txt")
        port = load_recognizer_port(export_dir / "recognizer_fixture.pt", charset)
        page = fixture_page()
        region_crop = crop(page, reading_order(decode(
            load_detector_port(export_dir / "detector_small_fixture.pt").infer(page), 0.25
        ))[0])
        text, confidence = ctc_greedy_decode(port.infer(region_crop), charset)
        assert text == "skills"
        assert confidence > 0.99


class TestEmbeddingPorts:
    @pytest.mark.parametrize(
        "name,vocab_file,merges",
        [
            ("bert", "bert_fixture.vocab", None),
            ("distilbert", "distilbert_fixture.vocab", None),
            ("roberta", "roberta_fixture.vocab", "roberta_fixture.merges"),
            ("xlnet", "xlnet_fixture.scores", None),
        ],
    )
    def test_every_backbone_loads_and_embeds(self, export_dir, name, vocab_file, merges):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            tokenizer = build_tokenizer(
                name, export_dir / vocab_file,
                export_dir / merges if merges else None,
            )
        pooling = "last" if name == "xlnet" else "cls"
        port = load_embedding_port(export_dir / f"{name}_fixture.pt", pooling=pooling)
        assert port.hidden_dim == 32
        seq = tokenizer.encode("senior software engineer with python")
        vector = embed(seq, port)
        assert vector.shape == (32,)
        assert np.all(np.isfinite(vector))
        assert np.array_equal(vector, embed(seq, port))  # frozen + deterministic
