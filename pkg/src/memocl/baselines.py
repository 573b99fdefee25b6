"""Test-time augmentation baselines: aggregate predictions, never update weights.

Ties are broken toward the smallest class index everywhere.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .augment import AugmenterSet, Rng, augment
from .errors import InvalidInputError
from .model import ModelParams, Vocabulary, forward_batch, softmax

HARD_VOTE = "hard_vote"
SOFT_VOTE = "soft_vote"
LOGIT_AVERAGE = "logit_average"
CLASS_WEIGHTED = "class_weighted"
METHODS = (HARD_VOTE, SOFT_VOTE, LOGIT_AVERAGE, CLASS_WEIGHTED)


def _stack(rows, what: str) -> np.ndarray:
    rows = [np.asarray(r, dtype=np.float64) for r in rows]
    if not rows:
        raise InvalidInputError(f"cannot aggregate an empty list of {what}")
    if len({r.shape for r in rows}) != 1:
        raise InvalidInputError(f"{what} differ in length")
    return np.stack(rows)


def hard_vote(labels: Sequence[int]) -> int:
    if len(labels) == 0:
        raise InvalidInputError("cannot vote over an empty label list")
    return int(np.argmax(np.bincount(np.asarray(labels, dtype=np.int64))))


def _column_means(rows: np.ndarray) -> np.ndarray:
    # fsum is correctly rounded, so exact ties stay ties regardless of row order or duplication
    return np.array([math.fsum(col) for col in rows.T]) / rows.shape[0]


def soft_vote(dists) -> int:
    return int(np.argmax(_column_means(_stack(dists, "distributions"))))


def logit_average(logit_lists) -> int:
    return int(np.argmax(_column_means(_stack(logit_lists, "logit vectors"))))


def class_weighted(logit_lists, weights) -> int:
    logits = _stack(logit_lists, "logit vectors")
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (logits.shape[0],):
        raise InvalidInputError(f"expected {logits.shape[0]} weights, got shape {weights.shape}")
    if not np.all(np.isfinite(weights)) or not np.any(weights):
        raise InvalidInputError("class weights must be finite and not all zero")
    return int(np.argmax(weights @ logits))


def aggregate(method: str, logits: np.ndarray, weights=None) -> int:
    """Combine an (N, C) array of augmentation logits into one label."""
    if method == HARD_VOTE:
        return hard_vote(np.argmax(logits, axis=1))
    if method == SOFT_VOTE:
        return soft_vote(softmax(logits))
    if method == LOGIT_AVERAGE:
        return logit_average(logits)
    if method == CLASS_WEIGHTED:
        if weights is None:
            raise InvalidInputError("class_weighted needs fitted weights")
        return class_weighted(logits, weights)
    raise InvalidInputError(f"unknown aggregation method {method!r}; expected one of {METHODS}")


def fit_class_weights(pool_logits, labels, eta: float = 0.1, epochs: int = 200, seed: int = 0,
                      batch_size: int = 64) -> np.ndarray:
    """Learn one weight per augmentation position on a labeled calibration pool.

    ``pool_logits`` has shape (S, N, C).  Minimises the mean cross-entropy of
    ``softmax(sum_n w_n * logits_n)`` by mini-batch gradient descent from
    ``w = 1/N``; mini-batch order is drawn from ``seed``.
    """
    try:
        pool = np.asarray(pool_logits, dtype=np.float64)
    except ValueError:
        raise InvalidInputError("every calibration sample needs the same number of logits") from None
    if pool.ndim != 3 or pool.shape[0] == 0:
        raise InvalidInputError("pool_logits must have shape (samples, N, classes) with samples >= 1")
    labels = np.asarray(labels, dtype=np.int64)
    s, n, c = pool.shape
    if labels.shape != (s,) or labels.min() < 0 or labels.max() >= c:
        raise InvalidInputError("labels must be one valid class index per calibration sample")

    w = np.full(n, 1.0 / n)
    rng = np.random.default_rng(seed)
    onehot = np.eye(c)[labels]
    for _ in range(epochs):
        order = rng.permutation(s)
        for lo in range(0, s, batch_size):
            sel = order[lo : lo + batch_size]
            z = np.einsum("n,snc->sc", w, pool[sel])
            resid = softmax(z) - onehot[sel]
            w = w - eta * np.einsum("sc,snc->n", resid, pool[sel]) / len(sel)
    return w


def augmentation_logits(params: ModelParams, words: Sequence[str], augs: AugmenterSet, n: int,
                        rng: Rng, vocab: Vocabulary) -> np.ndarray:
    """Logits (n, C) for ``n`` augmentations drawn as in the adaptation loop."""
    if n < 1:
        raise InvalidInputError("need at least one augmentation")
    batch = [vocab.encode(augment(words, augs, rng)) for _ in range(n)]
    return forward_batch(params, batch)


def predict_tta(params: ModelParams, words: Sequence[str], method: str, augs: AugmenterSet, n: int,
                rng: Rng, vocab: Vocabulary, weights=None) -> int:
    return aggregate(method, augmentation_logits(params, words, augs, n, rng, vocab), weights)
