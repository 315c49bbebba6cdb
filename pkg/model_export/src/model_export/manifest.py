"""Export manifests: declared tensor shapes, sidecar listing, content hash."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

MANIFEST_VERSION = 1


class ExportError(Exception):
    """Export failed or an exported artifact failed verification."""


@dataclass(frozen=True)
class TensorSpec:
    name: str
    shape: tuple[int | None, ...]
    dtype: str

    def as_dict(self) -> dict:
        return {"name": self.name, "shape": list(self.shape), "dtype": self.dtype}

    @classmethod
    def from_dict(cls, raw: dict) -> "TensorSpec":
        return cls(
            name=raw["name"],
            shape=tuple(None if v is None else int(v) for v in raw["shape"]),
            dtype=raw["dtype"],
        )

    def matches(self, actual: tuple[int, ...]) -> bool:
        if len(actual) != len(self.shape):
            return False
        return all(d is None or d == a for d, a in zip(self.shape, actual))


@dataclass(frozen=True)
class ExportManifest:
    source: str
    target: str
    inputs: tuple[TensorSpec, ...]
    outputs: tuple[TensorSpec, ...]
    sidecars: tuple[str, ...]
    sha256: str
    reference_metrics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {
            "manifest_version": MANIFEST_VERSION,
            "source": self.source,
            "target": self.target,
            "inputs": [t.as_dict() for t in self.inputs],
            "outputs": [t.as_dict() for t in self.outputs],
            "sidecars": list(self.sidecars),
            "sha256": self.sha256,
        }
        if self.reference_metrics:
            out["reference_metrics"] = self.reference_metrics
        return out


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def manifest_path_for(model_path: Path) -> Path:
    return model_path.with_suffix(model_path.suffix + ".manifest.json")


def save_manifest(manifest: ExportManifest, model_path: Path) -> Path:
    path = manifest_path_for(model_path)
    path.write_text(json.dumps(manifest.as_dict(), indent=2, sort_keys=True) + "\n")
    return path


def load_manifest(path: Path) -> ExportManifest:
    raw = json.loads(Path(path).read_text("utf-8"))
    if raw.get("manifest_version") != MANIFEST_VERSION:
        raise ExportError(f"{path}: unsupported manifest version {raw.get('manifest_version')}")
    return ExportManifest(
        source=raw["source"],
        target=raw["target"],
        inputs=tuple(TensorSpec.from_dict(t) for t in raw["inputs"]),
        outputs=tuple(TensorSpec.from_dict(t) for t in raw["outputs"]),
        sidecars=tuple(raw["sidecars"]),
        sha256=raw["sha256"],
        reference_metrics=raw.get("reference_metrics", {}),
    )


def load_verified(manifest_file: Path) -> tuple[ExportManifest, Path]:
    """Load a manifest and verify the model file hash; mismatch is an error."""
    manifest_file = Path(manifest_file)
    manifest = load_manifest(manifest_file)
    model_path = manifest_file.parent / manifest.target
    if not model_path.is_file():
        raise ExportError(f"manifest target missing: {model_path}")
    actual = file_sha256(model_path)
    if actual != manifest.sha256:
        raise ExportError(
            f"{model_path}: content hash mismatch (manifest {manifest.sha256[:12]}…, "
            f"file {actual[:12]}…)"
        )
    return manifest, model_path
