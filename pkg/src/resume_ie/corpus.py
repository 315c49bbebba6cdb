"""Section records, the five-class catalog, person-disjoint splits, class weights.

Dataset file format: UTF-8, one JSON object per line with fields
``record_id``, ``person_id``, ``label``, ``text`` and optionally
``normalized_text``. Classes file: one class name per line, line index = id.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

CLASS_NAMES = ("education", "experience", "skill", "personal", "language")
NUM_CLASSES = len(CLASS_NAMES)


class DatasetError(ValueError):
    """Malformed dataset file, unknown label, or unsatisfiable split."""


@dataclass(frozen=True)
class ClassLabel:
    id: int
    name: str

    def __post_init__(self) -> None:
        if not 0 <= self.id < NUM_CLASSES:
            raise DatasetError(f"class id {self.id} outside [0, {NUM_CLASSES})")
        if self.name not in CLASS_NAMES:
            raise DatasetError(f"unknown class name {self.name!r}")


CATALOG = tuple(ClassLabel(i, name) for i, name in enumerate(CLASS_NAMES))


def label_from_name(name: str) -> ClassLabel:
    try:
        return CATALOG[CLASS_NAMES.index(name)]
    except ValueError:
        raise DatasetError(
            f"unknown label {name!r}; expected one of {', '.join(CLASS_NAMES)}"
        ) from None


def label_from_id(class_id: int) -> ClassLabel:
    if not 0 <= class_id < NUM_CLASSES:
        raise DatasetError(f"class id {class_id} outside [0, {NUM_CLASSES})")
    return CATALOG[class_id]


def load_classes(path: str | Path) -> tuple[ClassLabel, ...]:
    """Read a classes file (one name per line, line index = class id)."""
    names = [line.rstrip("\n") for line in Path(path).read_text("utf-8").splitlines()]
    names = [n for n in names if n]
    if sorted(names) != sorted(CLASS_NAMES):
        raise DatasetError(
            f"classes file {path} must list exactly {', '.join(CLASS_NAMES)}"
        )
    return tuple(ClassLabel(i, n) for i, n in enumerate(names))


@dataclass(frozen=True)
class SectionRecord:
    """One labeled text group from a resume."""

    record_id: str
    person_id: str
    label: ClassLabel
    text: str
    normalized_text: str | None = None

    def __post_init__(self) -> None:
        if not self.record_id:
            raise DatasetError("record_id must be non-empty")
        if not self.person_id:
            raise DatasetError("person_id must be non-empty")
        if not self.text:
            raise DatasetError(f"record {self.record_id}: text must be non-empty")


@dataclass(frozen=True)
class ClassWeights:
    """Per-class loss weights ordered by class id."""

    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.weights) != NUM_CLASSES:
            raise DatasetError(f"expected {NUM_CLASSES} weights, got {len(self.weights)}")
        if any(w <= 0 for w in self.weights):
            raise DatasetError("all class weights must be positive")


@dataclass(frozen=True)
class SplitAssignment:
    train: frozenset[str]
    val: frozenset[str]
    test: frozenset[str]
    ratios: tuple[float, float, float]

    def split_of(self, record_id: str) -> str:
        for name in ("train", "val", "test"):
            if record_id in getattr(self, name):
                return name
        raise KeyError(record_id)


def load_text_dataset(path: str | Path) -> list[SectionRecord]:
    """Parse a line-delimited dataset file into records.

    Raises DatasetError with the offending line number for malformed lines
    and with the offending name for unknown labels.
    """
    p = Path(path)
    records: list[SectionRecord] = []
    with p.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"{p}:{lineno}: malformed line: {e.msg}") from e
            if not isinstance(raw, dict):
                raise DatasetError(f"{p}:{lineno}: malformed line: not an object")
            missing = {"record_id", "person_id", "label", "text"} - raw.keys()
            if missing:
                raise DatasetError(
                    f"{p}:{lineno}: missing fields: {', '.join(sorted(missing))}"
                )
            try:
                label = label_from_name(str(raw["label"]))
            except DatasetError as e:
                raise DatasetError(f"{p}:{lineno}: {e}") from None
            try:
                records.append(
                    SectionRecord(
                        record_id=str(raw["record_id"]),
                        person_id=str(raw["person_id"]),
                        label=label,
                        text=str(raw["text"]),
                        normalized_text=(
                            str(raw["normalized_text"])
                            if raw.get("normalized_text") is not None
                            else None
                        ),
                    )
                )
            except DatasetError as e:
                raise DatasetError(f"{p}:{lineno}: {e}") from None
    return records


def save_text_dataset(records: Iterable[SectionRecord], path: str | Path) -> None:
    """Write records in the line-delimited format read by load_text_dataset."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "record_id": rec.record_id,
                "person_id": rec.person_id,
                "label": rec.label.name,
                "text": rec.text,
            }
            if rec.normalized_text is not None:
                obj["normalized_text"] = rec.normalized_text
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def weights_from_counts(counts: Sequence[int]) -> ClassWeights:
    """Inverse-frequency weights w_c = N / (K * n_c) from per-class counts."""
    if len(counts) != NUM_CLASSES:
        raise DatasetError(f"expected {NUM_CLASSES} counts, got {len(counts)}")
    for class_id, n in enumerate(counts):
        if n <= 0:
            raise DatasetError(
                f"class {CLASS_NAMES[class_id]!r} has zero count; cannot weight an absent class"
            )
    total = sum(counts)
    return ClassWeights(tuple(total / (NUM_CLASSES * n) for n in counts))


def compute_class_weights(records: Sequence[SectionRecord]) -> ClassWeights:
    counts = Counter(rec.label.id for rec in records)
    return weights_from_counts([counts.get(i, 0) for i in range(NUM_CLASSES)])


def largest_remainder_sizes(total: int, ratios: Sequence[float]) -> list[int]:
    """Round total*ratios to integers summing to total, largest remainder first.

    Remainder ties go to the earlier split.
    """
    quotas = [total * r for r in ratios]
    sizes = [int(q) for q in quotas]
    leftover = total - sum(sizes)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[:leftover]:
        sizes[i] += 1
    return sizes


def split_by_person(
    records: Sequence[SectionRecord],
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> SplitAssignment:
    """Partition records into train/val/test with no person in two splits.

    Persons are shuffled by the seed and dealt out in largest-remainder
    counts; every record follows its person.
    """
    if len(ratios) != 3:
        raise DatasetError("ratios must have exactly three entries")
    if any(r <= 0 for r in ratios):
        raise DatasetError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DatasetError(f"ratios must sum to 1, got {sum(ratios)}")

    by_person: dict[str, list[str]] = {}
    for rec in records:
        by_person.setdefault(rec.person_id, []).append(rec.record_id)

    persons = sorted(by_person)
    rng = random.Random(seed)
    rng.shuffle(persons)

    sizes = largest_remainder_sizes(len(persons), ratios)
    if any(s == 0 for s in sizes):
        raise DatasetError(
            f"{len(persons)} persons cannot fill three splits with ratios {ratios}"
        )

    buckets: list[set[str]] = [set(), set(), set()]
    start = 0
    for i, size in enumerate(sizes):
        for person in persons[start : start + size]:
            buckets[i].update(by_person[person])
        start += size

    return SplitAssignment(
        train=frozenset(buckets[0]),
        val=frozenset(buckets[1]),
        test=frozenset(buckets[2]),
        ratios=tuple(ratios),
    )
