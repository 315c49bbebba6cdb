"""Text normalization and the five augmentation strategies.

Normalization lowercases, strips punctuation and stopwords, and removes the
leading section-header words so models cannot just memorize them. Augmentation
samples one strategy per copy with an RNG derived from (seed, record_id,
copy_index), which makes full runs reproducible in any execution order.
"""

from __future__ import annotations

import hashlib
import math
import random
import string
import unicodedata
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Protocol, Sequence

from .corpus import CLASS_NAMES, SectionRecord

STRATEGIES = (
    "char_delete",
    "char_substitute",
    "word_insert",
    "contextual_substitute",
    "back_translate",
)

_SUBSTITUTE_ALPHABET = string.ascii_lowercase
_MAX_SIMILAR = 100


class AugmentError(RuntimeError):
    """Unusable augmentation plan, typically a missing port."""


class SimilarityPort(Protocol):
    """Ranks similar words; at most the top 100 candidates are used."""

    def similar(self, word: str) -> Sequence[str]: ...


class TranslatorPort(Protocol):
    """Round-trip translation through a pivot language."""

    def forward(self, text: str) -> str: ...

    def reverse(self, text: str) -> str: ...


def _load_wordlist(name: str) -> frozenset[str]:
    raw = resources.files("resume_ie").joinpath(f"data/{name}").read_text("utf-8")
    return frozenset(line.strip() for line in raw.splitlines() if line.strip())


def load_wordlist_file(path: str | Path) -> frozenset[str]:
    """Read a stopword or header-lexicon file: one token per line, UTF-8."""
    return frozenset(
        line.strip() for line in Path(path).read_text("utf-8").splitlines() if line.strip()
    )


DEFAULT_STOPWORDS = _load_wordlist("stopwords.txt")
DEFAULT_HEADER_LEXICON = _load_wordlist("headers.txt")


@dataclass(frozen=True)
class NormalizationRules:
    lowercase: bool = True
    header_lexicon: frozenset[str] = DEFAULT_HEADER_LEXICON
    stopword_list: frozenset[str] = DEFAULT_STOPWORDS
    strip_punctuation: bool = True

    def __post_init__(self) -> None:
        missing = set(CLASS_NAMES) - self.header_lexicon
        if missing:
            raise ValueError(
                f"header lexicon must cover the class names; missing {sorted(missing)}"
            )


DEFAULT_RULES = NormalizationRules()


def _is_punctuation(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def normalize(text: str, rules: NormalizationRules = DEFAULT_RULES) -> str:
    """Lowercase, strip punctuation/stopwords, drop the leading header words,
    and collapse whitespace. Idempotent; may return an empty string."""
    if rules.lowercase:
        text = text.lower()
    if rules.strip_punctuation:
        text = "".join(" " if _is_punctuation(ch) else ch for ch in text)
    tokens = [t for t in text.split() if t not in rules.stopword_list]
    start = 0
    while start < len(tokens) and tokens[start] in rules.header_lexicon:
        start += 1
    return " ".join(tokens[start:])


@dataclass(frozen=True)
class AugmentPlan:
    """Configuration for one reproducible augmentation run.

    strategy_mix aligns with STRATEGIES; rates are per-strategy intensity
    defaults, all configurable.
    """

    factor: int = 3
    strategy_mix: tuple[float, ...] = (1.0, 1.0, 1.0, 0.0, 0.0)
    seed: int = 0
    char_rate: float = 0.10
    insert_rate: float = 0.05
    substitute_rate: float = 0.15
    vocabulary: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.factor < 1:
            raise ValueError(f"factor must be >= 1, got {self.factor}")
        if len(self.strategy_mix) != len(STRATEGIES):
            raise ValueError(f"strategy_mix needs {len(STRATEGIES)} weights")
        if any(w < 0 for w in self.strategy_mix) or not any(self.strategy_mix):
            raise ValueError("strategy weights must be non-negative and not all zero")


@dataclass(frozen=True)
class AugmentPorts:
    similarity: SimilarityPort | None = None
    translator: TranslatorPort | None = None


def derive_rng(seed: int, record_id: str, copy_index: int) -> random.Random:
    """Stable per-copy RNG; independent of processing order."""
    key = f"{seed}|{record_id}|{copy_index}".encode("utf-8")
    digest = hashlib.sha256(key).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _char_positions(text: str) -> list[int]:
    return [i for i, ch in enumerate(text) if not ch.isspace()]


def char_delete(text: str, rng: random.Random, rate: float) -> str:
    """Delete roughly rate * len non-space characters, always keeping one."""
    positions = _char_positions(text)
    n = min(math.ceil(rate * len(positions)), len(positions) - 1)
    if n <= 0:
        return text
    drop = set(rng.sample(positions, n))
    return "".join(ch for i, ch in enumerate(text) if i not in drop)


def char_substitute(text: str, rng: random.Random, rate: float) -> str:
    positions = _char_positions(text)
    if not positions:
        return text
    n = min(math.ceil(rate * len(positions)), len(positions))
    chars = list(text)
    for i in rng.sample(positions, n):
        pool = [c for c in _SUBSTITUTE_ALPHABET if c != chars[i]]
        chars[i] = rng.choice(pool)
    return "".join(chars)


def word_insert(
    text: str, rng: random.Random, rate: float, vocabulary: Sequence[str]
) -> str:
    words = text.split()
    if not words:
        return text
    pool = list(vocabulary) or sorted(set(words))
    n = math.ceil(rate * len(words))
    for _ in range(n):
        words.insert(rng.randrange(len(words) + 1), rng.choice(pool))
    return " ".join(words)


def contextual_substitute(
    text: str, similarity_port: SimilarityPort, rate: float, rng: random.Random
) -> str:
    """Replace rate * word_count words with one of their top-100 similar
    candidates; words without candidates stay unchanged."""
    words = text.split()
    if not words:
        return text
    n = min(math.ceil(rate * len(words)), len(words))
    if n <= 0:
        return text
    for i in sorted(rng.sample(range(len(words)), n)):
        candidates = list(similarity_port.similar(words[i]))[:_MAX_SIMILAR]
        if candidates:
            words[i] = rng.choice(candidates)
    return " ".join(words)


def back_translate(text: str, translator_port: TranslatorPort) -> str:
    """Round-trip the text through the pivot language, whitespace-normalized."""
    return " ".join(translator_port.reverse(translator_port.forward(text)).split())


def augment_record(
    record: SectionRecord,
    plan: AugmentPlan,
    copy_index: int,
    ports: AugmentPorts | None = None,
) -> SectionRecord:
    """Produce one augmented copy; label and person are preserved and the new
    record id is derived deterministically."""
    ports = ports or AugmentPorts()
    rng = derive_rng(plan.seed, record.record_id, copy_index)
    strategy = rng.choices(STRATEGIES, weights=plan.strategy_mix, k=1)[0]

    if strategy == "char_delete":
        text = char_delete(record.text, rng, plan.char_rate)
    elif strategy == "char_substitute":
        text = char_substitute(record.text, rng, plan.char_rate)
    elif strategy == "word_insert":
        text = word_insert(record.text, rng, plan.insert_rate, plan.vocabulary)
    elif strategy == "contextual_substitute":
        if ports.similarity is None:
            raise AugmentError(
                "contextual_substitute strategy requires a similarity port"
            )
        text = contextual_substitute(record.text, ports.similarity, plan.substitute_rate, rng)
    else:
        if ports.translator is None:
            raise AugmentError("back_translate strategy requires a translator port")
        text = back_translate(record.text, ports.translator)

    return SectionRecord(
        record_id=f"{record.record_id}#aug{copy_index}",
        person_id=record.person_id,
        label=record.label,
        text=text or record.text,
        normalized_text=None,
    )


def dataset_vocabulary(records: Sequence[SectionRecord]) -> tuple[str, ...]:
    vocab: set[str] = set()
    for rec in records:
        vocab.update(rec.text.split())
    return tuple(sorted(vocab))


def augment_dataset(
    records: Sequence[SectionRecord],
    plan: AugmentPlan,
    ports: AugmentPorts | None = None,
) -> list[SectionRecord]:
    """Expand the dataset to factor * len(records): each record keeps its
    original plus factor-1 augmented copies."""
    if not plan.vocabulary:
        plan = replace(plan, vocabulary=dataset_vocabulary(records))
    out: list[SectionRecord] = []
    for record in records:
        out.append(record)
        for copy_index in range(1, plan.factor):
            out.append(augment_record(record, plan, copy_index, ports))
    return out
