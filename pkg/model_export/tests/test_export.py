from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
import torch

CHECKED_IN = Path(__file__).resolve().parent.parent / "fixtures"

from model_export.exporters import (
    BACKBONE_NAMES,
    PARITY_TOLERANCE,
    _export_verified,
    export_backbone,
    export_detector,
    export_recognizer,
)
from model_export.fixtures import (
    CHARSET_SYMBOLS,
    FixtureBackbone,
    FIXTURE_HIDDEN_DIM,
    SEQ_LEN,
)
from model_export.manifest import (
    ExportError,
    TensorSpec,
    load_manifest,
    load_verified,
    manifest_path_for,
)


class TestManifest:
    def test_round_trip_and_hash_verification(self, tmp_path):
        manifest = export_recognizer(tmp_path)
        manifest_file = manifest_path_for(tmp_path / manifest.target)
        loaded = load_manifest(manifest_file)
        assert loaded == manifest
        verified, model_path = load_verified(manifest_file)
        assert verified.sha256 == manifest.sha256
        assert model_path.name == manifest.target

    def test_hash_mismatch_is_a_load_error(self, tmp_path):
        manifest = export_recognizer(tmp_path)
        model_path = tmp_path / manifest.target
        model_path.write_bytes(model_path.read_bytes() + b"tamper")
        with pytest.raises(ExportError, match="hash mismatch"):
            load_verified(manifest_path_for(model_path))

    def test_missing_target_is_a_load_error(self, tmp_path):
        manifest = export_recognizer(tmp_path)
        model_path = tmp_path / manifest.target
        manifest_file = manifest_path_for(model_path)
        model_path.unlink()
        with pytest.raises(ExportError, match="missing"):
            load_verified(manifest_file)


class TestCheckedInFixtures:
    def test_every_manifest_verifies(self):
        manifests = sorted(CHECKED_IN.glob("*.manifest.json"))
        assert len(manifests) == 6
        for manifest_file in manifests:
            manifest, model_path = load_verified(manifest_file)
            model = torch.jit.load(str(model_path)).eval()
            probes = []
            for spec in manifest.inputs:
                shape = tuple(16 if d is None else d for d in spec.shape)
                if spec.dtype == "int64":
                    probes.append(torch.zeros(shape, dtype=torch.int64))
                else:
                    probes.append(torch.full(shape, 0.5))
            with torch.no_grad():
                out = model(*probes)
            assert manifest.outputs[0].matches(tuple(out.shape))
            for sidecar in manifest.sidecars:
                assert (CHECKED_IN / sidecar).is_file()


class TestExportVerification:
    def test_shape_check_failure_leaves_no_files(self, tmp_path):
        module = FixtureBackbone(vocab_size=8, hidden_dim=4)
        ids = torch.zeros(1, SEQ_LEN, dtype=torch.int64)
        mask = torch.ones(1, SEQ_LEN, dtype=torch.int64)
        with pytest.raises(ExportError, match="does not match declared"):
            _export_verified(
                module,
                (ids, mask),
                tmp_path / "backbone.pt",
                source="fixture:test",
                inputs=(
                    TensorSpec("ids", (1, SEQ_LEN), "int64"),
                    TensorSpec("mask", (1, SEQ_LEN), "int64"),
                ),
                # deliberately wrong hidden size
                outputs=(TensorSpec("hidden_states", (1, SEQ_LEN, 99), "float32"),),
                sidecars={"should_not_exist.txt": "x"},
            )
        assert list(tmp_path.iterdir()) == []

    def test_parity_holds_for_every_fixture_export(self, tmp_path):
        manifests = [export_detector("small", tmp_path), export_recognizer(tmp_path)]
        manifests += [export_backbone(n, tmp_path) for n in BACKBONE_NAMES]
        for manifest in manifests:
            model = torch.jit.load(str(tmp_path / manifest.target)).eval()
            probes = []
            for spec in manifest.inputs:
                shape = tuple(8 if d is None else d for d in spec.shape)
                if spec.dtype == "int64":
                    probes.append(torch.zeros(shape, dtype=torch.int64))
                else:
                    probes.append(torch.full(shape, 0.5))
            with torch.no_grad():
                first = model(*probes)
                second = model(*probes)
            assert float((first - second).abs().max()) <= PARITY_TOLERANCE
            assert manifest.outputs[0].matches(tuple(first.shape))

    def test_real_detector_export_is_unavailable_here(self, tmp_path):
        with pytest.raises(ExportError, match="fixture"):
            export_detector("large", tmp_path, fixture=False)

    def test_real_backbone_export_requires_cached_checkpoint(self, tmp_path):
        try:
            manifest = export_backbone("distilbert", tmp_path, fixture=False)
        except ExportError as e:
            assert "local" in str(e) or "transformers" in str(e)
        else:
            assert manifest.inputs[0].shape == (1, SEQ_LEN)


class TestBackboneExports:
    def test_manifest_declares_length_75_inputs(self, tmp_path):
        manifest = export_backbone("distilbert", tmp_path)
        assert [t.name for t in manifest.inputs] == ["ids", "mask"]
        assert all(t.shape == (1, 75) for t in manifest.inputs)
        assert manifest.outputs[0].shape == (1, 75, FIXTURE_HIDDEN_DIM)

    def test_every_family_emits_its_sidecar(self, tmp_path):
        expected = {
            "bert": ["bert_fixture.vocab"],
            "distilbert": ["distilbert_fixture.vocab"],
            "roberta": ["roberta_fixture.vocab", "roberta_fixture.merges"],
            "xlnet": ["xlnet_fixture.scores"],
        }
        for name, sidecars in expected.items():
            manifest = export_backbone(name, tmp_path)
            assert list(manifest.sidecars) == sidecars
            for sidecar in sidecars:
                assert (tmp_path / sidecar).is_file()

    def test_unknown_name_rejected(self, tmp_path):
        with pytest.raises(ExportError, match="unknown backbone"):
            export_backbone("gpt2", tmp_path)

    def test_same_seed_exports_identical_weights(self, tmp_path):
        # archive bytes differ (zip metadata), but the networks must match
        a = export_backbone("bert", tmp_path / "a", seed=3)
        b = export_backbone("bert", tmp_path / "b", seed=3)
        model_a = torch.jit.load(str(tmp_path / "a" / a.target)).eval()
        model_b = torch.jit.load(str(tmp_path / "b" / b.target)).eval()
        ids = torch.arange(SEQ_LEN, dtype=torch.int64).unsqueeze(0) % 8
        mask = torch.ones(1, SEQ_LEN, dtype=torch.int64)
        with torch.no_grad():
            assert torch.equal(model_a(ids, mask), model_b(ids, mask))


class TestDetectorExport:
    def test_reference_metrics_recorded_for_each_size(self, tmp_path):
        large = export_detector("large", tmp_path)
        assert large.reference_metrics == {"map50": 0.8456, "map50_95": 0.6362}
        medium = export_detector("medium", tmp_path)
        assert medium.reference_metrics == {"map50": 0.8370, "map50_95": 0.6390}
        small = export_detector("small", tmp_path)
        assert small.reference_metrics == {"map50": 0.7970, "map50_95": 0.5800}

    def test_fixture_emits_its_fixed_box(self, tmp_path):
        manifest = export_detector("small", tmp_path, boxes_cxcywh=[[100.0, 80.0, 60.0, 40.0]])
        model = torch.jit.load(str(tmp_path / manifest.target)).eval()
        with torch.no_grad():
            out = model(torch.full((1, 3, 640, 640), 0.5))
        assert out.shape == (1, 1, 5)
        assert out[0, 0, :4].tolist() == [100.0, 80.0, 60.0, 40.0]
        assert 0.0 < float(out[0, 0, 4]) < 1.0


class TestRecognizerExport:
    def test_fixture_logits_decode_to_skills(self, tmp_path):
        manifest = export_recognizer(tmp_path)
        model = torch.jit.load(str(tmp_path / manifest.target)).eval()
        with torch.no_grad():
            logits = model(torch.rand(1, 3, 40, 200))[0].numpy()
        path = np.argmax(logits, axis=1)
        decoded = []
        previous = 0
        for idx in path:
            if idx != 0 and idx != previous:
                decoded.append(CHARSET_SYMBOLS[idx - 1])
            previous = idx
        assert "".join(decoded) == "skills"
        assert "charset.txt" in manifest.sidecars

    def test_variable_input_sizes_accepted(self, tmp_path):
        manifest = export_recognizer(tmp_path)
        model = torch.jit.load(str(tmp_path / manifest.target)).eval()
        for shape in ((1, 3, 24, 96), (1, 3, 64, 400)):
            with torch.no_grad():
                out = model(torch.rand(*shape))
            assert manifest.outputs[0].matches(tuple(out.shape))
