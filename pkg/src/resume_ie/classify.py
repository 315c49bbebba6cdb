"""Frozen-backbone embedding port, two-linear-layer head, and its training.

The backbone is consumed purely as a feature extractor: a port maps a
TokenSequence to per-position hidden states and only the head's parameters
ever update. The head is dropout -> linear -> ReLU -> dropout -> linear.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .corpus import NUM_CLASSES, ClassLabel, ClassWeights, label_from_id, weights_from_counts
from .metrics import confusion, f1_report
from .textprep import NormalizationRules, DEFAULT_RULES, normalize
from .tokenizers import MAX_LEN, TokenSequence, Tokenizer

POOLING_MODES = ("cls", "mean", "last")

_HEAD_MAGIC = b"RIEH"
_HEAD_VERSION = 1


class EmbeddingPort(Protocol):
    """Frozen backbone: TokenSequence -> (MAX_LEN, hidden_dim) states.

    Implementations never update weights; repeated calls on the same input
    must return identical states.
    """

    hidden_dim: int
    pooling: str

    def hidden_states(self, seq: TokenSequence) -> np.ndarray: ...


def embed(seq: TokenSequence, port: EmbeddingPort) -> np.ndarray:
    """Pool the port's hidden states over mask=1 positions."""
    states = np.asarray(port.hidden_states(seq), dtype=np.float64)
    if states.shape != (MAX_LEN, port.hidden_dim):
        raise ValueError(
            f"port returned states of shape {states.shape}, expected {(MAX_LEN, port.hidden_dim)}"
        )
    if seq.true_length == 0:
        raise ValueError("cannot pool a sequence whose mask is all zero")
    if port.pooling == "cls":
        return states[0].copy()
    if port.pooling == "mean":
        return states[: seq.true_length].mean(axis=0)
    if port.pooling == "last":
        return states[seq.true_length - 1].copy()
    raise ValueError(f"unknown pooling mode {port.pooling!r}")


@dataclass
class ClassifierHead:
    """Parameters of the two-linear-layer classification head."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    dropout_p: float = 0.1

    def __post_init__(self) -> None:
        hidden, dim = self.w1.shape
        if self.b1.shape != (hidden,):
            raise ValueError("b1 shape does not match w1")
        if self.w2.shape != (NUM_CLASSES, hidden):
            raise ValueError(f"w2 must map hidden -> {NUM_CLASSES} classes")
        if self.b2.shape != (NUM_CLASSES,):
            raise ValueError("b2 shape does not match w2")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p {self.dropout_p} outside [0, 1)")
        for arr in (self.w1, self.b1, self.w2, self.b2):
            if not np.all(np.isfinite(arr)):
                raise ValueError("head parameters must be finite")

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    def copy(self) -> "ClassifierHead":
        return ClassifierHead(
            w1=self.w1.copy(), b1=self.b1.copy(),
            w2=self.w2.copy(), b2=self.b2.copy(),
            dropout_p=self.dropout_p,
        )


def init_head(
    input_dim: int, hidden_dim: int = 128, dropout_p: float = 0.1, seed: int = 0
) -> ClassifierHead:
    rng = np.random.default_rng(seed)
    return ClassifierHead(
        w1=rng.normal(0.0, np.sqrt(2.0 / input_dim), size=(hidden_dim, input_dim)),
        b1=np.zeros(hidden_dim),
        w2=rng.normal(0.0, np.sqrt(2.0 / hidden_dim), size=(NUM_CLASSES, hidden_dim)),
        b2=np.zeros(NUM_CLASSES),
        dropout_p=dropout_p,
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _dropout_mask(
    shape: tuple[int, ...], p: float, rng: np.random.Generator
) -> np.ndarray:
    # Inverted dropout: kept units scale by 1/(1-p) so eval needs no rescale.
    return (rng.random(shape) >= p) / (1.0 - p)


def head_forward(
    x: np.ndarray,
    head: ClassifierHead,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Logits for one embedding vector. Dropout only acts in train mode."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("embedding contains non-finite values")
    return _forward_batch(x[None, :], head, train_mode, rng)[0][0]


def _forward_batch(
    X: np.ndarray,
    head: ClassifierHead,
    train_mode: bool,
    rng: np.random.Generator | None,
) -> tuple[np.ndarray, dict]:
    """Batched forward pass returning logits and the backward cache."""
    if train_mode and head.dropout_p > 0.0:
        if rng is None:
            raise ValueError("train-mode dropout needs an rng")
        d1 = _dropout_mask(X.shape, head.dropout_p, rng)
    else:
        d1 = np.ones_like(X)
    x0 = X * d1
    a = x0 @ head.w1.T + head.b1
    h = np.maximum(a, 0.0)
    if train_mode and head.dropout_p > 0.0:
        d2 = _dropout_mask(h.shape, head.dropout_p, rng)
    else:
        d2 = np.ones_like(h)
    h2 = h * d2
    logits = h2 @ head.w2.T + head.b2
    cache = {"x0": x0, "a": a, "h2": h2, "d2": d2}
    return logits, cache


def weighted_ce(
    logits: np.ndarray, labels: Sequence[int], weights: ClassWeights
) -> float:
    """Weighted cross-entropy: sum_i w_{y_i} * (-log p_i[y_i]) / sum_i w_{y_i}."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64)
    if np.any(y < 0) or np.any(y >= NUM_CLASSES):
        raise ValueError(f"labels must lie in [0, {NUM_CLASSES})")
    w = np.asarray(weights.weights, dtype=np.float64)[y]
    log_probs = logits - logits.max(axis=1, keepdims=True)
    log_probs = log_probs - np.log(np.exp(log_probs).sum(axis=1, keepdims=True))
    nll = -log_probs[np.arange(len(y)), y]
    return float((w * nll).sum() / w.sum())


def loss_and_grads(
    X: np.ndarray,
    labels: Sequence[int],
    head: ClassifierHead,
    weights: ClassWeights,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Weighted-CE loss and its analytic gradients for every head parameter."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64)
    logits, cache = _forward_batch(X, head, train_mode, rng)
    w = np.asarray(weights.weights, dtype=np.float64)[y]
    loss = weighted_ce(logits, y, weights)

    probs = softmax(logits)
    grad_logits = probs.copy()
    grad_logits[np.arange(len(y)), y] -= 1.0
    grad_logits *= (w / w.sum())[:, None]

    grads = {
        "w2": grad_logits.T @ cache["h2"],
        "b2": grad_logits.sum(axis=0),
    }
    dh2 = grad_logits @ head.w2
    da = dh2 * cache["d2"] * (cache["a"] > 0.0)
    grads["w1"] = da.T @ cache["x0"]
    grads["b1"] = da.sum(axis=0)
    return loss, grads


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float = 0.001,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """In-place Adam update with bias correction."""
    for key, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise ValueError(f"non-finite gradient for parameter {key!r}")
        if grad.shape != params[key].shape:
            raise ValueError(f"gradient shape mismatch for parameter {key!r}")
    state.step += 1
    t = state.step
    for key, grad in grads.items():
        state.m[key] = beta1 * state.m[key] + (1.0 - beta1) * grad
        state.v[key] = beta2 * state.v[key] + (1.0 - beta2) * grad * grad
        m_hat = state.m[key] / (1.0 - beta1**t)
        v_hat = state.v[key] / (1.0 - beta2**t)
        params[key] -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    hidden_dim: int = 128
    dropout_p: float = 0.1

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


@dataclass
class EncodedDataset:
    sequences: list[TokenSequence]
    labels: list[int]

    def __post_init__(self) -> None:
        if len(self.sequences) != len(self.labels):
            raise ValueError("sequences and labels must have equal length")

    def __len__(self) -> int:
        return len(self.sequences)


def _embed_all(dataset: EncodedDataset, port: EmbeddingPort) -> np.ndarray:
    return np.stack([embed(seq, port) for seq in dataset.sequences])


def train_head(
    train: EncodedDataset,
    val: EncodedDataset,
    port: EmbeddingPort,
    config: TrainConfig = TrainConfig(),
) -> tuple[ClassifierHead, list[dict]]:
    """Train the head to convergence with early stopping on val F1-macro.

    Class weights come from the train split only. The backbone is frozen, so
    every sample is embedded exactly once up front. Returns the best-on-val
    head and the per-epoch history.
    """
    if len(train) == 0 or len(val) == 0:
        raise ValueError("train and val datasets must be non-empty")
    counts = [train.labels.count(c) for c in range(NUM_CLASSES)]
    weights = weights_from_counts(counts)

    X_train = _embed_all(train, port)
    X_val = _embed_all(val, port)
    y_train = np.asarray(train.labels, dtype=np.int64)
    y_val = list(val.labels)

    head = init_head(
        input_dim=X_train.shape[1],
        hidden_dim=config.hidden_dim,
        dropout_p=config.dropout_p,
        seed=config.seed,
    )
    params = {"w1": head.w1, "b1": head.b1, "w2": head.w2, "b2": head.b2}
    state = AdamState.zeros_like(params)
    rng = np.random.default_rng(config.seed)

    history: list[dict] = []
    best_f1 = float("-inf")
    best_head = head.copy()
    epochs_without_improvement = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train))
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, grads = loss_and_grads(
                X_train[batch], y_train[batch], head, weights,
                train_mode=True, rng=rng,
            )
            adam_step(params, grads, state, lr=config.lr,
                      beta1=config.beta1, beta2=config.beta2, eps=config.eps)
            epoch_losses.append(loss)

        val_logits, _ = _forward_batch(X_val, head, train_mode=False, rng=None)
        val_pred = [int(i) for i in np.argmax(val_logits, axis=1)]
        val_f1 = f1_report(confusion(y_val, val_pred, NUM_CLASSES)).macro
        history.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(epoch_losses)),
                "val_f1_macro": val_f1,
            }
        )
        if val_f1 > best_f1:
            best_f1 = val_f1
            best_head = head.copy()
            epochs_without_improvement = 0
        else:
            epochs_without_improvement += 1
            if epochs_without_improvement >= config.patience:
                break
    return best_head, history


def predict(
    text: str,
    tokenizer: Tokenizer,
    port: EmbeddingPort,
    head: ClassifierHead,
    rules: NormalizationRules = DEFAULT_RULES,
) -> tuple[ClassLabel, np.ndarray]:
    """Normalize, encode, embed, and classify one text.

    Ties break toward the lowest class id; the returned probabilities sum to 1.
    """
    seq = tokenizer.encode(normalize(text, rules))
    vector = embed(seq, port)
    logits = head_forward(vector, head, train_mode=False)
    probs = softmax(logits)
    return label_from_id(int(np.argmax(probs))), probs


def save_head(head: ClassifierHead, path: str | Path) -> None:
    """Write the versioned binary checkpoint.

    Layout (little-endian): magic "RIEH", u32 version, u32 input_dim,
    u32 hidden_dim, u32 num_classes, f64 dropout_p, then float64 row-major
    w1, b1, w2, b2. Round-trips bit-exactly.
    """
    header = struct.pack(
        "<4sIIIId",
        _HEAD_MAGIC,
        _HEAD_VERSION,
        head.input_dim,
        head.hidden_dim,
        NUM_CLASSES,
        head.dropout_p,
    )
    with Path(path).open("wb") as fh:
        fh.write(header)
        for arr in (head.w1, head.b1, head.w2, head.b2):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_head(path: str | Path) -> ClassifierHead:
    data = Path(path).read_bytes()
    header_size = struct.calcsize("<4sIIIId")
    if len(data) < header_size:
        raise ValueError(f"{path}: truncated head checkpoint")
    magic, version, input_dim, hidden_dim, num_classes, dropout_p = struct.unpack(
        "<4sIIIId", data[:header_size]
    )
    if magic != _HEAD_MAGIC:
        raise ValueError(f"{path}: not a head checkpoint (bad magic)")
    if version != _HEAD_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    if num_classes != NUM_CLASSES:
        raise ValueError(f"{path}: checkpoint has {num_classes} classes, expected {NUM_CLASSES}")
    counts = [
        hidden_dim * input_dim,
        hidden_dim,
        num_classes * hidden_dim,
        num_classes,
    ]
    expected = header_size + 8 * sum(counts)
    if len(data) != expected:
        raise ValueError(f"{path}: checkpoint is {len(data)} bytes, expected {expected}")
    offset = header_size
    arrays = []
    for count in counts:
        arrays.append(np.frombuffer(data, dtype="<f8", count=count, offset=offset).copy())
        offset += 8 * count
    return ClassifierHead(
        w1=arrays[0].reshape(hidden_dim, input_dim),
        b1=arrays[1],
        w2=arrays[2].reshape(num_classes, hidden_dim),
        b2=arrays[3],
        dropout_p=dropout_p,
    )
