"""Mean-pooled embedding classifier with hand-derived gradients.

The model is ``f(x) = mean_t(E[x_t]) @ W + b``.  Everything is float64 and
parameters are immutable: updates return new :class:`ModelParams`.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, ParseError, ValidationError

UNK = "<unk>"
CHECKPOINT_VERSION = 1

_WORD_RE = re.compile(r"[a-z0-9]+(?:'[a-z0-9]+)*")


def split_words(text: str) -> list[str]:
    """Lowercase ``text`` and split it on whitespace and punctuation.

    Apostrophes inside a word are kept so that contractions such as
    ``don't`` survive as one token.
    """
    return _WORD_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    unk_index: int
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tokens = tuple(self.tokens)
        object.__setattr__(self, "tokens", tokens)
        index = {t: i for i, t in enumerate(tokens)}
        if len(index) != len(tokens):
            raise ValidationError("vocabulary tokens must be unique")
        if not 0 <= self.unk_index < len(tokens):
            raise ValidationError(f"unknown-token index {self.unk_index} out of range")
        object.__setattr__(self, "_index", index)

    @classmethod
    def build(cls, words, unk: str = UNK) -> "Vocabulary":
        """Vocabulary over the distinct ``words`` in first-seen order, unk last."""
        seen = dict.fromkeys(w for w in words if w != unk)
        tokens = tuple(seen) + (unk,)
        return cls(tokens, len(tokens) - 1)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def lookup(self, token: str) -> int:
        return self._index.get(token, self.unk_index)

    def encode(self, words: Sequence[str]) -> list[int]:
        get = self._index.get
        unk = self.unk_index
        return [get(w, unk) for w in words]


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    return vocab.encode(split_words(text))


def _frozen_array(value, ndim: int, name: str) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Classifier weights: embeddings (V, d), head_weights (d, C), head_bias (C,)."""

    embeddings: np.ndarray
    head_weights: np.ndarray
    head_bias: np.ndarray

    def __post_init__(self):
        emb = _frozen_array(self.embeddings, 2, "embeddings")
        w = _frozen_array(self.head_weights, 2, "head_weights")
        b = _frozen_array(self.head_bias, 1, "head_bias")
        if emb.shape[0] < 1 or emb.shape[1] < 1:
            raise ValidationError("need V >= 1 and d >= 1")
        if w.shape[0] != emb.shape[1]:
            raise ValidationError(
                f"head_weights rows {w.shape[0]} != embedding width {emb.shape[1]}"
            )
        if b.shape[0] != w.shape[1]:
            raise ValidationError(f"head_bias length {b.shape[0]} != classes {w.shape[1]}")
        if b.shape[0] < 2:
            raise ValidationError("need at least two classes")
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "head_weights", w)
        object.__setattr__(self, "head_bias", b)

    @property
    def vocab_size(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def num_classes(self) -> int:
        return self.head_bias.shape[0]

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.embeddings, self.head_weights, self.head_bias

    def identical_to(self, other: "ModelParams") -> bool:
        """Bitwise equality of every parameter array."""
        return all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.arrays(), other.arrays())
        )


@dataclass(frozen=True, eq=False)
class Gradient:
    embeddings: np.ndarray
    head_weights: np.ndarray
    head_bias: np.ndarray

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.embeddings, self.head_weights, self.head_bias

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "Gradient":
        return cls(*(np.zeros_like(a) for a in params.arrays()))

    def is_zero(self) -> bool:
        return not any(np.any(a) for a in self.arrays())


def init_params(vocab_size: int, dim: int, num_classes: int, seed: int, scale: float = 0.1) -> ModelParams:
    rng = np.random.default_rng(seed)
    return ModelParams(
        embeddings=rng.normal(0.0, scale, size=(vocab_size, dim)),
        head_weights=rng.normal(0.0, scale, size=(dim, num_classes)),
        head_bias=np.zeros(num_classes),
    )


def _check_indices(params: ModelParams, tokens) -> np.ndarray:
    idx = np.asarray(tokens, dtype=np.int64)
    if idx.ndim != 1:
        raise InvalidInputError("token sequence must be one-dimensional")
    if idx.size and (idx.min() < 0 or idx.max() >= params.vocab_size):
        raise InvalidInputError(
            f"token index out of range for vocabulary of size {params.vocab_size}"
        )
    return idx


def _pool(params: ModelParams, idx: np.ndarray) -> np.ndarray:
    if idx.size == 0:
        return np.zeros(params.dim)
    return params.embeddings[idx].mean(axis=0)


def forward(params: ModelParams, tokens: Sequence[int]) -> np.ndarray:
    """Logits for one token sequence.  An empty sequence pools to zero."""
    idx = _check_indices(params, tokens)
    return _pool(params, idx) @ params.head_weights + params.head_bias


def forward_batch(params: ModelParams, batch: Sequence[Sequence[int]]) -> np.ndarray:
    """Logits of shape (N, C) for N token sequences."""
    pooled = np.stack([_pool(params, _check_indices(params, t)) for t in batch])
    return pooled @ params.head_weights + params.head_bias


_TINY = np.finfo(np.float64).tiny


def softmax(logits) -> np.ndarray:
    """Max-shifted softmax over the last axis.

    Entries that would underflow to zero are floored at the smallest normal
    double so every probability stays strictly positive.
    """
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return np.maximum(e / e.sum(axis=-1, keepdims=True), _TINY)


def entropy(p) -> float:
    """Shannon entropy in nats, with 0 log 0 taken as 0."""
    p = np.asarray(p, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def marginal(dists) -> np.ndarray:
    dists = [np.asarray(d, dtype=np.float64) for d in dists]
    if not dists:
        raise InvalidInputError("marginal of an empty list")
    if len({d.shape for d in dists}) != 1:
        raise InvalidInputError("distributions differ in length")
    return np.mean(np.stack(dists), axis=0)


def _scatter_embedding_grad(params: ModelParams, idxs: list[np.ndarray], d_pooled: np.ndarray) -> np.ndarray:
    g_emb = np.zeros_like(params.embeddings)
    rows, vals = [], []
    for n, idx in enumerate(idxs):
        if idx.size:
            rows.append(idx)
            vals.append(np.broadcast_to(d_pooled[n] / idx.size, (idx.size, params.dim)))
    if rows:
        np.add.at(g_emb, np.concatenate(rows), np.concatenate(vals))
    return g_emb


def _backprop(params: ModelParams, idxs, pooled: np.ndarray, d_logits: np.ndarray) -> Gradient:
    g_w = pooled.T @ d_logits
    g_b = d_logits.sum(axis=0)
    d_pooled = d_logits @ params.head_weights.T
    return Gradient(_scatter_embedding_grad(params, idxs, d_pooled), g_w, g_b)


def _batch_probs(params: ModelParams, batch):
    idxs = [_check_indices(params, t) for t in batch]
    pooled = np.stack([_pool(params, i) for i in idxs])
    probs = softmax(pooled @ params.head_weights + params.head_bias)
    return idxs, pooled, probs


def entropy_loss(params: ModelParams, batch: Sequence[Sequence[int]]) -> float:
    if not batch:
        raise InvalidInputError("empty augmentation batch")
    _, _, probs = _batch_probs(params, batch)
    return entropy(probs.mean(axis=0))


def entropy_loss_and_grad(params: ModelParams, batch: Sequence[Sequence[int]]) -> tuple[float, Gradient]:
    """Entropy of the marginal prediction over ``batch`` and its exact gradient.

    With ``pbar`` the mean of the per-sequence softmax outputs and
    ``s = -(1 + log pbar)``, the gradient with respect to sequence n's logits
    is ``(1/N) * p_n * (s - <s, p_n>)``.
    """
    if not batch:
        raise InvalidInputError("empty augmentation batch")
    idxs, pooled, probs = _batch_probs(params, batch)
    n = probs.shape[0]
    pbar = probs.mean(axis=0)
    loss = entropy(pbar)
    s = -(1.0 + np.log(pbar))
    d_logits = probs * (s[None, :] - (probs @ s)[:, None]) / n
    return loss, _backprop(params, idxs, pooled, d_logits)


def cross_entropy_loss_and_grad(params: ModelParams, batch, labels) -> tuple[float, Gradient]:
    idxs, pooled, probs = _batch_probs(params, batch)
    labels = np.asarray(labels, dtype=np.int64)
    n = probs.shape[0]
    rows = np.arange(n)
    loss = float(-np.log(np.maximum(probs[rows, labels], 1e-300)).mean())
    d_logits = probs.copy()
    d_logits[rows, labels] -= 1.0
    d_logits /= n
    return loss, _backprop(params, idxs, pooled, d_logits)


@dataclass
class OptimizerState:
    """Optimizer bookkeeping.  Mutated in place by :func:`apply_update`."""

    kind: str = "sgd"
    step_count: int = 0
    first_moment: Gradient | None = None
    second_moment: Gradient | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise InvalidInputError(f"unknown optimizer {self.kind!r}")
        has_moments = self.first_moment is not None and self.second_moment is not None
        if self.kind == "adam" and not has_moments:
            raise InvalidInputError("adam state needs moment accumulators")
        if self.kind == "sgd" and (self.first_moment is not None or self.second_moment is not None):
            raise InvalidInputError("sgd state carries no moments")

    @classmethod
    def create(cls, kind: str, params: ModelParams, **kwargs) -> "OptimizerState":
        if kind == "adam":
            return cls(
                kind,
                first_moment=Gradient.zeros_like(params),
                second_moment=Gradient.zeros_like(params),
                **kwargs,
            )
        return cls(kind, **kwargs)


def apply_update(params: ModelParams, grad: Gradient, opt: OptimizerState, eta: float) -> ModelParams:
    """One optimizer step.  Returns new params and advances ``opt``."""
    if eta < 0:
        raise InvalidInputError("learning rate must be non-negative")
    for p, g in zip(params.arrays(), grad.arrays()):
        if p.shape != np.shape(g):
            raise InvalidInputError(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
    opt.step_count += 1
    if opt.kind == "sgd":
        new = [p - eta * g for p, g in zip(params.arrays(), grad.arrays())]
        return ModelParams(*new)

    t = opt.step_count
    b1, b2 = opt.beta1, opt.beta2
    m = [b1 * m0 + (1.0 - b1) * g for m0, g in zip(opt.first_moment.arrays(), grad.arrays())]
    v = [b2 * v0 + (1.0 - b2) * g * g for v0, g in zip(opt.second_moment.arrays(), grad.arrays())]
    opt.first_moment = Gradient(*m)
    opt.second_moment = Gradient(*v)
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new = [
        p - eta * (mi / c1) / (np.sqrt(vi / c2) + opt.epsilon)
        for p, mi, vi in zip(params.arrays(), m, v)
    ]
    return ModelParams(*new)


def predict(params: ModelParams, tokens: Sequence[int]) -> int:
    return int(np.argmax(forward(params, tokens)))


def train_source(
    params: ModelParams,
    sequences: Sequence[Sequence[int]],
    labels: Sequence[int],
    epochs: int,
    eta: float,
    seed: int,
    batch_size: int = 32,
    optimizer: str = "sgd",
    weight_decay: float = 0.0,
) -> ModelParams:
    """Mini-batch cross-entropy training on labeled token sequences.

    ``weight_decay`` adds ``weight_decay/2 * ||theta||^2`` to every batch loss.
    Deterministic given ``seed``.  If training ends with a higher training
    loss than it started with, the input params are returned.
    """
    if len(sequences) == 0:
        raise InvalidInputError("cannot train on an empty dataset")
    if len(sequences) != len(labels):
        raise InvalidInputError("sequences and labels differ in length")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() >= params.num_classes:
        raise InvalidInputError("label outside [0, C)")
    if epochs == 0:
        return params

    rng = np.random.default_rng(seed)
    opt = OptimizerState.create(optimizer, params)
    start_loss, _ = cross_entropy_loss_and_grad(params, sequences, labels)
    current = params
    n = len(sequences)
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            sel = order[lo : lo + batch_size]
            _, grad = cross_entropy_loss_and_grad(
                current, [sequences[i] for i in sel], labels[sel]
            )
            if weight_decay:
                grad = Gradient(*(g + weight_decay * p for g, p in zip(grad.arrays(), current.arrays())))
            current = apply_update(current, grad, opt, eta)
    end_loss, _ = cross_entropy_loss_and_grad(current, sequences, labels)
    return current if end_loss <= start_loss else params


def _fmt_rows(arr: np.ndarray) -> str:
    if arr.ndim == 1:
        return "[" + ", ".join(format(float(x), ".17g") for x in arr) + "]"
    return "[\n    " + ",\n    ".join(_fmt_rows(row) for row in arr) + "\n  ]"


def dumps_checkpoint(vocab: Vocabulary, params: ModelParams) -> str:
    if len(vocab) != params.vocab_size:
        raise InvalidInputError("vocabulary size does not match embedding rows")
    head = {
        "format_version": CHECKPOINT_VERSION,
        "V": params.vocab_size,
        "d": params.dim,
        "C": params.num_classes,
        "unk_index": vocab.unk_index,
        "vocabulary": list(vocab.tokens),
    }
    parts = [f"  {json.dumps(k)}: {json.dumps(v, ensure_ascii=False)}" for k, v in head.items()]
    parts.append(f'  "embeddings": {_fmt_rows(params.embeddings)}')
    parts.append(f'  "head_weights": {_fmt_rows(params.head_weights)}')
    parts.append(f'  "head_bias": {_fmt_rows(params.head_bias)}')
    return "{\n" + ",\n".join(parts) + "\n}\n"


def save_checkpoint(path, vocab: Vocabulary, params: ModelParams) -> None:
    Path(path).write_text(dumps_checkpoint(vocab, params), encoding="utf-8")


def loads_checkpoint(text: str, path=None) -> tuple[Vocabulary, ModelParams]:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc), path, exc.lineno) from exc
    if obj.get("format_version") != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint version {obj.get('format_version')!r}", path)
    vocab = Vocabulary(tuple(obj["vocabulary"]), obj["unk_index"])
    params = ModelParams(obj["embeddings"], obj["head_weights"], obj["head_bias"])
    dims = (params.vocab_size, params.dim, params.num_classes)
    if dims != (obj["V"], obj["d"], obj["C"]) or len(vocab) != params.vocab_size:
        raise ValidationError(f"checkpoint header dimensions disagree with arrays: {dims}")
    return vocab, params


def load_checkpoint(path) -> tuple[Vocabulary, ModelParams]:
    return loads_checkpoint(Path(path).read_text(encoding="utf-8"), path)
