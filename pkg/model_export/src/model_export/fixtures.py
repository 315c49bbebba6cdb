"""Tiny random-weight fixture models with production input/output shapes.

These exist so integration tests can exercise the TorchScript inference ports
without downloading real checkpoints. Weights are seeded, so regeneration is
deterministic.
"""

from __future__ import annotations

from functools import lru_cache

import torch

SEQ_LEN = 75
FIXTURE_HIDDEN_DIM = 32
FIXTURE_RECOGNIZER_TEXT = "skills"

WORDPIECE_WORDS = (
    "the and for with software engineer developer python java data science "
    "university degree bachelor master experience skills language english "
    "turkish project team cloud aws azure sql linux docker design analysis "
    "test research email phone address city present junior senior lead"
).split()

UNIGRAM_PIECES = {
    "▁the": -2.0, "▁and": -2.2, "▁s": -1.5, "▁p": -1.8,
    "▁": -1.2, "s": -1.0, "t": -1.1, "e": -0.9, "a": -0.95, "i": -1.05,
    "n": -1.15, "r": -1.25, "o": -1.3, "l": -1.4, "er": -1.9, "ing": -2.1,
    "ed": -2.0, "th": -1.7,
}

CHARSET_SYMBOLS = tuple("abcdefghijklmnopqrstuvwxyz0123456789 .,:+-#@/")


@lru_cache(maxsize=1)
def bytes_to_unicode() -> dict[int, str]:
    """Reversible byte -> printable-unit mapping for byte-level BPE tables."""
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(0xA1, 0xAD)) + list(range(0xAE, 0x100))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, (chr(c) for c in cs)))


def wordpiece_vocab_lines() -> list[str]:
    return ["[PAD]", "[UNK]", "[CLS]", "[SEP]", *WORDPIECE_WORDS]


def byte_bpe_vocab_lines() -> tuple[list[str], list[str]]:
    """Token<TAB>id table plus ranked merges, merge results included."""
    merges = [("t", "h"), ("th", "e"), ("a", "n")]
    tokens = ["<pad>", "<unk>", "<s>", "</s>"] + sorted(bytes_to_unicode().values())
    for left, right in merges:
        if left + right not in tokens:
            tokens.append(left + right)
    table = [f"{tok}\t{i}" for i, tok in enumerate(tokens)]
    merge_lines = ["#version: fixture"] + [f"{l} {r}" for l, r in merges]
    return table, merge_lines


def unigram_score_lines() -> list[str]:
    lines = ["<pad>\t0.0", "<unk>\t0.0", "<cls>\t0.0", "<sep>\t0.0"]
    lines += [f"{piece}\t{score}" for piece, score in UNIGRAM_PIECES.items()]
    return lines


def charset_lines() -> list[str]:
    return list(CHARSET_SYMBOLS)


def vocab_size_for(name: str) -> int:
    if name in ("bert", "distilbert"):
        return len(wordpiece_vocab_lines())
    if name == "roberta":
        return len(byte_bpe_vocab_lines()[0])
    return len(unigram_score_lines())


class FixtureBackbone(torch.nn.Module):
    """Embedding-lookup backbone: (ids, mask) int64 (1, 75) -> (1, 75, D)."""

    def __init__(self, vocab_size: int, hidden_dim: int = FIXTURE_HIDDEN_DIM, seed: int = 0):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        self.embedding = torch.nn.Embedding(vocab_size, hidden_dim)
        with torch.no_grad():
            self.embedding.weight.copy_(
                torch.randn(vocab_size, hidden_dim, generator=generator)
            )

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        return self.embedding(ids) * mask.to(torch.float32).unsqueeze(-1)


class FixtureDetector(torch.nn.Module):
    """Constant-box detector: (1, 3, 640, 640) float -> (1, N, 5).

    Box geometry is a buffer; the confidence channel depends (weakly) on the
    input so the traced graph is not input-free.
    """

    def __init__(self, boxes_cxcywh: list[list[float]], seed: int = 0):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        boxes = torch.tensor(boxes_cxcywh, dtype=torch.float32)
        self.register_buffer("boxes", boxes)
        self.score_weight = torch.nn.Parameter(
            torch.randn(len(boxes_cxcywh), generator=generator) * 0.01
        )
        self.score_bias = torch.nn.Parameter(
            torch.full((len(boxes_cxcywh),), 2.0)
        )

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        brightness = image.mean()
        scores = torch.sigmoid(self.score_weight * brightness + self.score_bias)
        rows = torch.cat([self.boxes, scores.unsqueeze(-1)], dim=-1)
        return rows.unsqueeze(0)


class FixtureRecognizer(torch.nn.Module):
    """Constant-logit recognizer: (1, 3, H, W) float -> (1, T, S+1).

    The logits greedy-decode to a fixed text under the bundled charset
    (blank index 0, symbol i at column i+1).
    """

    def __init__(self, text: str = FIXTURE_RECOGNIZER_TEXT,
                 symbols: tuple[str, ...] = CHARSET_SYMBOLS):
        super().__init__()
        indices: list[int] = []
        previous = -1
        for ch in text:
            idx = symbols.index(ch) + 1
            if idx == previous:
                indices.append(0)
            indices.append(idx)
            previous = idx
        logits = torch.zeros(len(indices), len(symbols) + 1)
        for t, idx in enumerate(indices):
            logits[t, idx] = 10.0
        self.register_buffer("logits", logits)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        nudge = image.mean() * 0.0
        return (self.logits + nudge).unsqueeze(0)
