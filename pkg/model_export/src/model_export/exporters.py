"""Checkpoint exporters: TorchScript model files, sidecars, and manifests.

Every export is verified before anything lands on disk: the serialized graph
is reloaded, run on a probe input, compared against the source module within
1e-4, and shape-checked against the declared specs. On failure nothing is
written.
"""

from __future__ import annotations

from pathlib import Path

import torch

from .fixtures import (
    CHARSET_SYMBOLS,
    FIXTURE_HIDDEN_DIM,
    FixtureBackbone,
    FixtureDetector,
    FixtureRecognizer,
    SEQ_LEN,
    byte_bpe_vocab_lines,
    charset_lines,
    unigram_score_lines,
    vocab_size_for,
    wordpiece_vocab_lines,
)
from .manifest import ExportManifest, ExportError, TensorSpec, file_sha256, save_manifest

BACKBONE_NAMES = ("bert", "distilbert", "roberta", "xlnet")
DETECTOR_SIZES = ("small", "medium", "large")

# Published evaluation scores for the corresponding trained detectors;
# recorded in manifests as reference expectations, never verified here.
DETECTOR_REFERENCE_METRICS = {
    "large": {"map50": 0.8456, "map50_95": 0.6362},
    "medium": {"map50": 0.8370, "map50_95": 0.6390},
    "small": {"map50": 0.7970, "map50_95": 0.5800},
}

HF_CHECKPOINTS = {
    "bert": "bert-base-uncased",
    "distilbert": "distilbert-base-uncased",
    "roberta": "roberta-base",
    "xlnet": "xlnet-base-cased",
}

PARITY_TOLERANCE = 1e-4


def _export_verified(
    module: torch.nn.Module,
    example_inputs: tuple[torch.Tensor, ...],
    out_path: Path,
    source: str,
    inputs: tuple[TensorSpec, ...],
    outputs: tuple[TensorSpec, ...],
    sidecars: dict[str, str],
    script: bool = False,
    reference_metrics: dict | None = None,
) -> ExportManifest:
    """Serialize, verify parity and shapes, then commit model + sidecars."""
    module.eval()
    with torch.no_grad():
        reference = module(*example_inputs)
    exported = (
        torch.jit.script(module) if script else torch.jit.trace(module, example_inputs)
    )
    tmp_path = out_path.with_name(out_path.name + ".verify")
    try:
        torch.jit.save(exported, str(tmp_path))
        loaded = torch.jit.load(str(tmp_path), map_location="cpu")
        with torch.no_grad():
            actual = loaded(*example_inputs)
        drift = float((actual - reference).abs().max())
        if drift > PARITY_TOLERANCE:
            raise ExportError(
                f"{source}: exported output drifts {drift:.2e} from the source module"
            )
        for spec, tensor in zip(inputs, example_inputs):
            if not spec.matches(tuple(tensor.shape)):
                raise ExportError(
                    f"{source}: input {spec.name} shape {tuple(tensor.shape)} "
                    f"does not match declared {spec.shape}"
                )
        if not outputs[0].matches(tuple(actual.shape)):
            raise ExportError(
                f"{source}: output shape {tuple(actual.shape)} does not match "
                f"declared {outputs[0].shape}"
            )
    except Exception:
        tmp_path.unlink(missing_ok=True)
        raise

    tmp_path.replace(out_path)
    for name, content in sidecars.items():
        (out_path.parent / name).write_text(content, encoding="utf-8")
    manifest = ExportManifest(
        source=source,
        target=out_path.name,
        inputs=inputs,
        outputs=outputs,
        sidecars=tuple(sidecars),
        sha256=file_sha256(out_path),
        reference_metrics=reference_metrics or {},
    )
    save_manifest(manifest, out_path)
    return manifest


def _backbone_sidecars(name: str) -> dict[str, str]:
    if name in ("bert", "distilbert"):
        return {f"{name}_fixture.vocab": "\n".join(wordpiece_vocab_lines()) + "\n"}
    if name == "roberta":
        table, merges = byte_bpe_vocab_lines()
        return {
            "roberta_fixture.vocab": "\n".join(table) + "\n",
            "roberta_fixture.merges": "\n".join(merges) + "\n",
        }
    return {"xlnet_fixture.scores": "\n".join(unigram_score_lines()) + "\n"}


def export_backbone(
    name: str,
    out_dir: str | Path,
    fixture: bool = True,
    hidden_dim: int = FIXTURE_HIDDEN_DIM,
    seed: int = 0,
) -> ExportManifest:
    """Export a frozen backbone taking (ids, mask) of length 75.

    Fixture mode builds a tiny random-weight network with the production
    interface; real mode converts the pretrained checkpoint (requires a
    locally cached copy)."""
    if name not in BACKBONE_NAMES:
        raise ExportError(f"unknown backbone {name!r}; expected one of {BACKBONE_NAMES}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if fixture:
        vocab_size = vocab_size_for(name)
        module = FixtureBackbone(vocab_size, hidden_dim=hidden_dim, seed=seed)
        source = f"fixture:{name}"
        sidecars = _backbone_sidecars(name)
        out_path = out_dir / f"{name}_fixture.pt"
    else:
        module, vocab_size = _load_real_backbone(name)
        hidden_dim = module.hidden_dim
        source = f"hf:{HF_CHECKPOINTS[name]}"
        sidecars = {}
        out_path = out_dir / f"{name}.pt"

    ids = torch.zeros(1, SEQ_LEN, dtype=torch.int64)
    mask = torch.ones(1, SEQ_LEN, dtype=torch.int64)
    return _export_verified(
        module,
        (ids, mask),
        out_path,
        source=source,
        inputs=(
            TensorSpec("ids", (1, SEQ_LEN), "int64"),
            TensorSpec("mask", (1, SEQ_LEN), "int64"),
        ),
        outputs=(TensorSpec("hidden_states", (1, SEQ_LEN, hidden_dim), "float32"),),
        sidecars=sidecars,
    )


def _load_real_backbone(name: str):
    try:
        from transformers import AutoModel
    except ImportError as e:
        raise ExportError(
            "real backbone export needs the optional transformers dependency"
        ) from e

    class _Wrapper(torch.nn.Module):
        def __init__(self, inner):
            super().__init__()
            self.inner = inner
            self.hidden_dim = inner.config.hidden_size

        def forward(self, ids, mask):
            return self.inner(input_ids=ids, attention_mask=mask).last_hidden_state

    checkpoint = HF_CHECKPOINTS[name]
    try:
        inner = AutoModel.from_pretrained(checkpoint, local_files_only=True)
    except Exception as e:
        raise ExportError(
            f"checkpoint {checkpoint!r} is not available in the local cache; "
            "download it first or use fixture mode"
        ) from e
    inner.eval()
    for p in inner.parameters():
        p.requires_grad_(False)
    wrapper = _Wrapper(inner)
    return wrapper, inner.config.vocab_size


def export_detector(
    size: str = "small",
    out_dir: str | Path = ".",
    fixture: bool = True,
    boxes_cxcywh: list[list[float]] | None = None,
    seed: int = 0,
) -> ExportManifest:
    """Export a detector taking one 640x640 image; fixture mode emits a tiny
    network producing fixed boxes."""
    if size not in DETECTOR_SIZES:
        raise ExportError(f"unknown detector size {size!r}; expected one of {DETECTOR_SIZES}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if not fixture:
        raise ExportError(
            "real detector export needs the trained checkpoint and the "
            "ultralytics toolchain; only fixture mode is available here"
        )
    boxes = boxes_cxcywh or [[320.0, 90.0, 580.0, 100.0]]
    module = FixtureDetector(boxes, seed=seed)
    image = torch.full((1, 3, 640, 640), 0.5)
    return _export_verified(
        module,
        (image,),
        out_dir / f"detector_{size}_fixture.pt",
        source=f"fixture:detector-{size}",
        inputs=(TensorSpec("image", (1, 3, 640, 640), "float32"),),
        outputs=(TensorSpec("detections", (1, len(boxes), 5), "float32"),),
        sidecars={},
        reference_metrics=DETECTOR_REFERENCE_METRICS[size],
    )


def export_recognizer(
    out_dir: str | Path = ".",
    fixture: bool = True,
    text: str = "skills",
) -> ExportManifest:
    """Export a recognizer producing T x (S+1) CTC logits plus its charset
    sidecar; the fixture's logits decode to a fixed text."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not fixture:
        raise ExportError(
            "real recognizer export needs the pretrained CRNN weights; "
            "only fixture mode is available here"
        )
    module = FixtureRecognizer(text=text, symbols=CHARSET_SYMBOLS)
    timesteps = module.logits.shape[0]
    image = torch.full((1, 3, 32, 128), 0.5)
    return _export_verified(
        module,
        (image,),
        out_dir / "recognizer_fixture.pt",
        source="fixture:recognizer",
        inputs=(TensorSpec("image", (1, 3, None, None), "float32"),),
        outputs=(
            TensorSpec("logits", (1, timesteps, len(CHARSET_SYMBOLS) + 1), "float32"),
        ),
        sidecars={"charset.txt": "\n".join(charset_lines()) + "\n"},
        script=True,
    )
