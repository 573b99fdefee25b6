"""Test-time adaptation by marginal-entropy minimisation over augmentations.

``adapt_single`` handles one test input: it draws augmentations, optionally
filters them by semantic margin, minimises the entropy of the marginal
prediction over the kept batch, and predicts on the original input with the
updated weights.  ``run_stream`` applies it along a stream either episodically
(weights reset per sample) or continually (weights carried forward).
"""

from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .augment import AugmenterSet, Rng, augment
from .errors import InvalidInputError
from .model import (
    ModelParams,
    OptimizerState,
    Vocabulary,
    apply_update,
    entropy_loss,
    entropy_loss_and_grad,
    forward,
    softmax,
)

EPISODIC = "episodic"
CONTINUAL = "continual"


@dataclass(frozen=True)
class AdaptConfig:
    delta: float = 0.1
    num_aug: int = 20
    eta: float = 1e-4
    optimizer: str = "sgd"
    mode: str = CONTINUAL
    smf_enabled: bool = True
    max_attempts: int | None = None
    steps_per_sample: int = 1

    def __post_init__(self):
        if self.max_attempts is None:
            object.__setattr__(self, "max_attempts", 10 * self.num_aug)
        self.validate()

    def validate(self) -> None:
        if not 0.0 <= self.delta <= 1.0:
            raise InvalidInputError(f"delta must lie in [0, 1], got {self.delta}")
        if self.num_aug < 1:
            raise InvalidInputError(f"num_aug must be >= 1, got {self.num_aug}")
        if not self.eta >= 0.0:
            raise InvalidInputError(f"learning rate must be >= 0, got {self.eta}")
        if self.optimizer not in ("sgd", "adam"):
            raise InvalidInputError(f"optimizer must be sgd or adam, got {self.optimizer!r}")
        if self.mode not in (EPISODIC, CONTINUAL):
            raise InvalidInputError(f"mode must be episodic or continual, got {self.mode!r}")
        if self.max_attempts < self.num_aug:
            raise InvalidInputError("max_attempts must be >= num_aug")
        if self.steps_per_sample < 1:
            raise InvalidInputError("steps_per_sample must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class AdaptOutcome:
    predicted_label: int
    base_label: int
    marginal_dist: np.ndarray
    loss_before: float
    loss_after: float
    accepted_count: int
    rejected_count: int
    attempts: int
    fallback: bool
    params_after: ModelParams
    sample_id: int | None = None


def smf_keep(p_aug: float, p_ref: float, delta: float) -> bool:
    """Keep an augmentation whose probability for the reference class is
    strictly within ``delta`` of the unaugmented sample's."""
    return abs(p_aug - p_ref) < delta


def collect_batch(params: ModelParams, words: Sequence[str], ref_class: int, p_ref: float,
                  cfg: AdaptConfig, augs: AugmenterSet, rng: Rng, vocab: Vocabulary):
    """Draw augmentations until ``num_aug`` pass the filter or attempts run out.

    Returns ``(batch, rejected, attempts, fallback)``.  On fallback the batch
    is the ``num_aug`` most recently generated augmentations.
    """
    accepted: list[list[int]] = []
    recent: deque = deque(maxlen=cfg.num_aug)
    attempts = rejected = 0
    while len(accepted) < cfg.num_aug and attempts < cfg.max_attempts:
        x_aug = vocab.encode(augment(words, augs, rng))
        attempts += 1
        recent.append(x_aug)
        if cfg.smf_enabled:
            p_aug = softmax(forward(params, x_aug))[ref_class]
            if not smf_keep(p_aug, p_ref, cfg.delta):
                rejected += 1
                continue
        accepted.append(x_aug)
    if len(accepted) < cfg.num_aug:
        return list(recent), rejected, attempts, True
    return accepted, rejected, attempts, False


def adapt_single(params: ModelParams, opt: OptimizerState, words: Sequence[str], cfg: AdaptConfig,
                 augs: AugmenterSet, rng: Rng, vocab: Vocabulary,
                 sample_id: int | None = None) -> AdaptOutcome:
    """Adapt on one test input and predict its label.

    ``opt`` is advanced in place by each weight update.
    """
    x = vocab.encode(words)
    p_x = softmax(forward(params, x))
    base_label = int(np.argmax(p_x))
    batch, rejected, attempts, fallback = collect_batch(
        params, words, base_label, float(p_x[base_label]), cfg, augs, rng, vocab
    )

    current = params
    loss_before = None
    if cfg.eta > 0:
        for _ in range(cfg.steps_per_sample):
            loss, grad = entropy_loss_and_grad(current, batch)
            if loss_before is None:
                loss_before = loss
            current = apply_update(current, grad, opt, cfg.eta)
    else:
        loss_before = entropy_loss(current, batch)
    loss_after = entropy_loss(current, batch)
    marginal_dist = softmax(np.stack([forward(params, b) for b in batch])).mean(axis=0)

    return AdaptOutcome(
        predicted_label=int(np.argmax(forward(current, x))),
        base_label=base_label,
        marginal_dist=marginal_dist,
        loss_before=float(loss_before),
        loss_after=float(loss_after),
        accepted_count=attempts - rejected,
        rejected_count=rejected,
        attempts=attempts,
        fallback=fallback,
        params_after=current,
        sample_id=sample_id,
    )


def run_stream(params: ModelParams, records, cfg: AdaptConfig, augs: AugmenterSet,
               vocab: Vocabulary) -> tuple[list[AdaptOutcome], ModelParams]:
    """Adapt along ``records`` (``StreamRecord`` items) in order.

    Each record's augmentation RNG is seeded from its own ``seed`` field.
    Episodic mode starts every sample from ``params`` with a fresh optimizer
    and returns ``params`` unchanged; continual mode threads weights and
    optimizer state through the stream.
    """
    records = list(records)
    if not records:
        raise InvalidInputError("stream is empty")
    outcomes = []
    current = params
    opt = OptimizerState.create(cfg.optimizer, params)
    for rec in records:
        if cfg.mode == EPISODIC:
            current = params
            opt = OptimizerState.create(cfg.optimizer, params)
        out = adapt_single(current, opt, rec.words, cfg, augs, Rng(rec.seed), vocab,
                           sample_id=rec.sample_id)
        outcomes.append(out)
        if cfg.mode == CONTINUAL:
            current = out.params_after
    final = params if cfg.mode == EPISODIC else current
    return outcomes, final
