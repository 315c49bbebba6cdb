"""Subword tokenizers with a shared fixed-length encoding contract.

Three schemes cover the four backbone families: WordPiece (bert, distilbert),
byte-level BPE (roberta), and unigram/SentencePiece-style Viterbi (xlnet).
Every encoder emits exactly MAX_LEN ids with an attention mask; content is
head-truncated so the leading section words survive.

Vocabulary files are plain text: WordPiece one token per line (line = id);
byte-BPE a token<TAB>id table plus a ranked merges file ("left right" per
line); unigram a piece<TAB>log-prob table (line = id).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

MAX_LEN = 75
SCHEMES = ("wordpiece", "byte_bpe", "unigram")
WORD_MARKER = "▁"
UNK_PIECE_SCORE = -100.0

EXPECTED_VOCAB_SIZES = {
    "bert": 30522,
    "distilbert": 30522,
    "roberta": 50265,
    "xlnet": 32000,
}
MODEL_SCHEMES = {
    "bert": "wordpiece",
    "distilbert": "wordpiece",
    "roberta": "byte_bpe",
    "xlnet": "unigram",
}


@dataclass(frozen=True)
class SpecialTokens:
    pad: int
    unk: int
    bos: int
    eos: int


@dataclass(frozen=True)
class Vocab:
    scheme: str
    id_to_token: tuple[str, ...]
    special: SpecialTokens
    merges: tuple[tuple[str, str], ...] = ()
    scores: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        size = len(self.id_to_token)
        if len(set(self.id_to_token)) != size:
            raise ValueError("vocabulary tokens must be unique")
        for name in ("pad", "unk", "bos", "eos"):
            sid = getattr(self.special, name)
            if not 0 <= sid < size:
                raise ValueError(f"special token {name} id {sid} outside [0, {size})")
        if self.scheme == "unigram" and len(self.scores) != size:
            raise ValueError("unigram vocab needs one score per piece")

    def __len__(self) -> int:
        return len(self.id_to_token)

    @property
    def token_to_id(self) -> dict[str, int]:
        return _token_index(self.id_to_token)


@lru_cache(maxsize=32)
def _token_index(id_to_token: tuple[str, ...]) -> dict[str, int]:
    return {tok: i for i, tok in enumerate(id_to_token)}


@dataclass(frozen=True)
class TokenSequence:
    """Fixed-length id vector with its attention mask."""

    ids: tuple[int, ...]
    mask: tuple[int, ...]
    true_length: int

    def __post_init__(self) -> None:
        if len(self.ids) != MAX_LEN or len(self.mask) != MAX_LEN:
            raise ValueError(f"token sequences are exactly {MAX_LEN} long")
        if not 0 <= self.true_length <= MAX_LEN:
            raise ValueError(f"true_length {self.true_length} outside [0, {MAX_LEN}]")
        if any(m != (1 if i < self.true_length else 0) for i, m in enumerate(self.mask)):
            raise ValueError("mask must be 1 exactly on the first true_length positions")


def _finalize(ids: list[int], pad_id: int) -> TokenSequence:
    true_length = len(ids)
    padded = ids + [pad_id] * (MAX_LEN - true_length)
    mask = [1] * true_length + [0] * (MAX_LEN - true_length)
    return TokenSequence(ids=tuple(padded), mask=tuple(mask), true_length=true_length)


class WordPieceTokenizer:
    """Greedy longest-match-from-left subword tokenizer, "##" continuations."""

    scheme = "wordpiece"

    def __init__(self, vocab: Vocab):
        if vocab.scheme != "wordpiece":
            raise ValueError(f"vocab scheme {vocab.scheme!r} is not wordpiece")
        self.vocab = vocab

    def tokenize(self, text: str) -> list[str]:
        index = self.vocab.token_to_id
        unk_token = self.vocab.id_to_token[self.vocab.special.unk]
        pieces: list[str] = []
        for word in text.split():
            word_pieces: list[str] = []
            start = 0
            while start < len(word):
                end = len(word)
                found = None
                while end > start:
                    candidate = word[start:end]
                    if start > 0:
                        candidate = "##" + candidate
                    if candidate in index:
                        found = candidate
                        break
                    end -= 1
                if found is None:
                    word_pieces = [unk_token]
                    break
                word_pieces.append(found)
                start = end
            pieces.extend(word_pieces)
        return pieces

    def encode(self, text: str) -> TokenSequence:
        sp = self.vocab.special
        index = self.vocab.token_to_id
        content = [index[p] for p in self.tokenize(text)][: MAX_LEN - 2]
        return _finalize([sp.bos] + content + [sp.eos], sp.pad)

    def decode(self, seq: TokenSequence) -> str:
        sp = self.vocab.special
        out: list[str] = []
        for i in range(seq.true_length):
            tid = seq.ids[i]
            if tid in (sp.pad, sp.bos, sp.eos):
                continue
            token = self.vocab.id_to_token[tid]
            if token.startswith("##") and out:
                out[-1] += token[2:]
            else:
                out.append(token)
        return " ".join(out)


@lru_cache(maxsize=1)
def bytes_to_unicode() -> dict[int, str]:
    """Reversible byte -> printable-unit mapping used by byte-level BPE."""
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(0xA1, 0xAD)) + list(range(0xAE, 0x100))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, (chr(c) for c in cs)))


@lru_cache(maxsize=1)
def unicode_to_bytes() -> dict[str, int]:
    return {u: b for b, u in bytes_to_unicode().items()}


class ByteBpeTokenizer:
    """Byte-level BPE: lossless on arbitrary unicode by construction."""

    scheme = "byte_bpe"

    def __init__(self, vocab: Vocab):
        if vocab.scheme != "byte_bpe":
            raise ValueError(f"vocab scheme {vocab.scheme!r} is not byte_bpe")
        self.vocab = vocab
        self._ranks = {pair: rank for rank, pair in enumerate(vocab.merges)}

    def _apply_merges(self, units: list[str]) -> list[str]:
        while len(units) >= 2:
            pairs = {(units[i], units[i + 1]) for i in range(len(units) - 1)}
            ranked = [(self._ranks[p], p) for p in pairs if p in self._ranks]
            if not ranked:
                break
            _, best = min(ranked)
            merged: list[str] = []
            i = 0
            while i < len(units):
                if i + 1 < len(units) and (units[i], units[i + 1]) == best:
                    merged.append(units[i] + units[i + 1])
                    i += 2
                else:
                    merged.append(units[i])
                    i += 1
            units = merged
        return units

    def tokenize(self, text: str) -> list[str]:
        table = bytes_to_unicode()
        units = [table[b] for b in text.encode("utf-8")]
        return self._apply_merges(units)

    def encode(self, text: str) -> TokenSequence:
        sp = self.vocab.special
        index = self.vocab.token_to_id
        content = [index.get(t, sp.unk) for t in self.tokenize(text)][: MAX_LEN - 2]
        return _finalize([sp.bos] + content + [sp.eos], sp.pad)

    def decode(self, seq: TokenSequence) -> str:
        sp = self.vocab.special
        skip = {sp.pad, sp.bos, sp.eos}
        units = "".join(
            self.vocab.id_to_token[seq.ids[i]]
            for i in range(seq.true_length)
            if seq.ids[i] not in skip
        )
        table = unicode_to_bytes()
        return bytes(table[u] for u in units).decode("utf-8", errors="replace")


class UnigramTokenizer:
    """Viterbi segmentation maximizing total piece log-probability.

    Words carry the SentencePiece word-boundary marker; specials follow the
    XLNet layout (content, then separator, then the class token last).
    """

    scheme = "unigram"

    def __init__(self, vocab: Vocab):
        if vocab.scheme != "unigram":
            raise ValueError(f"vocab scheme {vocab.scheme!r} is not unigram")
        self.vocab = vocab
        self._scores = {
            tok: vocab.scores[i] for i, tok in enumerate(vocab.id_to_token)
        }
        self._max_piece = max(len(t) for t in vocab.id_to_token)

    def viterbi_segment(self, marked_word: str) -> tuple[list[str], float]:
        """Best segmentation of one marker-prefixed word and its total score.

        Characters not reachable through any piece fall back to unk spans at
        UNK_PIECE_SCORE each.
        """
        n = len(marked_word)
        unk_token = self.vocab.id_to_token[self.vocab.special.unk]
        best: list[float] = [float("-inf")] * (n + 1)
        back: list[tuple[int, str] | None] = [None] * (n + 1)
        best[0] = 0.0
        for end in range(1, n + 1):
            lo = max(0, end - self._max_piece)
            for start in range(lo, end):
                if best[start] == float("-inf"):
                    continue
                piece = marked_word[start:end]
                score = self._scores.get(piece)
                if score is None:
                    continue
                if best[start] + score > best[end]:
                    best[end] = best[start] + score
                    back[end] = (start, piece)
            if best[end] == float("-inf") and best[end - 1] != float("-inf"):
                best[end] = best[end - 1] + UNK_PIECE_SCORE
                back[end] = (end - 1, unk_token)

        pieces: list[str] = []
        pos = n
        while pos > 0:
            start, piece = back[pos]
            pieces.append(piece)
            pos = start
        pieces.reverse()
        # Merge adjacent unk fallbacks into a single unk span.
        merged: list[str] = []
        for piece in pieces:
            if piece == unk_token and merged and merged[-1] == unk_token:
                continue
            merged.append(piece)
        return merged, best[n]

    def tokenize(self, text: str) -> list[str]:
        pieces: list[str] = []
        for word in text.split():
            pieces.extend(self.viterbi_segment(WORD_MARKER + word)[0])
        return pieces

    def encode(self, text: str) -> TokenSequence:
        sp = self.vocab.special
        index = self.vocab.token_to_id
        content = [index.get(p, sp.unk) for p in self.tokenize(text)][: MAX_LEN - 2]
        return _finalize(content + [sp.eos, sp.bos], sp.pad)

    def decode(self, seq: TokenSequence) -> str:
        sp = self.vocab.special
        skip = {sp.pad, sp.bos, sp.eos}
        joined = "".join(
            self.vocab.id_to_token[seq.ids[i]]
            for i in range(seq.true_length)
            if seq.ids[i] not in skip
        )
        return joined.replace(WORD_MARKER, " ").strip()


Tokenizer = WordPieceTokenizer | ByteBpeTokenizer | UnigramTokenizer

_WORDPIECE_SPECIALS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]")
_BYTE_BPE_SPECIALS = ("<pad>", "<unk>", "<s>", "</s>")
_UNIGRAM_SPECIALS = ("<pad>", "<unk>", "<cls>", "<sep>")


def _find_specials(tokens: Sequence[str], names: tuple[str, str, str, str]) -> SpecialTokens:
    index = {tok: i for i, tok in enumerate(tokens)}
    missing = [n for n in names if n not in index]
    if missing:
        raise ValueError(f"vocabulary is missing special tokens: {', '.join(missing)}")
    pad, unk, bos, eos = (index[n] for n in names)
    return SpecialTokens(pad=pad, unk=unk, bos=bos, eos=eos)


def load_wordpiece_vocab(path: str | Path) -> Vocab:
    tokens = Path(path).read_text("utf-8").split("\n")
    if tokens and tokens[-1] == "":
        tokens.pop()
    return Vocab("wordpiece", tuple(tokens), _find_specials(tokens, _WORDPIECE_SPECIALS))


def load_byte_bpe_vocab(vocab_path: str | Path, merges_path: str | Path | None = None) -> Vocab:
    tokens: dict[int, str] = {}
    for lineno, line in enumerate(Path(vocab_path).read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            token, tid = line.rsplit("\t", 1)
            tokens[int(tid)] = token
        except ValueError:
            raise ValueError(f"{vocab_path}:{lineno}: expected 'token<TAB>id'") from None
    if sorted(tokens) != list(range(len(tokens))):
        raise ValueError(f"{vocab_path}: token ids must be dense in [0, {len(tokens)})")
    id_to_token = tuple(tokens[i] for i in range(len(tokens)))
    merges: list[tuple[str, str]] = []
    if merges_path is not None:
        for line in Path(merges_path).read_text("utf-8").splitlines():
            line = line.rstrip()
            if not line or line.startswith("#"):
                continue
            left, right = line.split(" ")
            merges.append((left, right))
    return Vocab(
        "byte_bpe",
        id_to_token,
        _find_specials(id_to_token, _BYTE_BPE_SPECIALS),
        merges=tuple(merges),
    )


def load_unigram_vocab(path: str | Path) -> Vocab:
    pieces: list[str] = []
    scores: list[float] = []
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            piece, score = line.rsplit("\t", 1)
            pieces.append(piece)
            scores.append(float(score))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: expected 'piece<TAB>log-prob'") from None
    return Vocab(
        "unigram",
        tuple(pieces),
        _find_specials(pieces, _UNIGRAM_SPECIALS),
        scores=tuple(scores),
    )


def build_tokenizer(
    name: str, vocab_path: str | Path, merges_path: str | Path | None = None
) -> Tokenizer:
    """Construct the tokenizer a backbone family expects.

    Vocabulary sizes that differ from the published ones produce a warning,
    not an error, so custom vocabularies stay usable.
    """
    if name not in MODEL_SCHEMES:
        raise ValueError(f"unknown model name {name!r}; expected one of {sorted(MODEL_SCHEMES)}")
    scheme = MODEL_SCHEMES[name]
    if scheme == "wordpiece":
        vocab = load_wordpiece_vocab(vocab_path)
        tok: Tokenizer = WordPieceTokenizer(vocab)
    elif scheme == "byte_bpe":
        vocab = load_byte_bpe_vocab(vocab_path, merges_path)
        tok = ByteBpeTokenizer(vocab)
    else:
        vocab = load_unigram_vocab(vocab_path)
        tok = UnigramTokenizer(vocab)
    expected = EXPECTED_VOCAB_SIZES[name]
    if len(vocab) != expected:
        warnings.warn(
            f"{name} normally uses a {expected}-entry vocabulary, got {len(vocab)}",
            stacklevel=2,
        )
    return tok
