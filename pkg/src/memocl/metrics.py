"""Average accuracy, worst-group accuracy and correction-to-corruption ratio."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

BASE = "base"
METHOD = "method"


@dataclass(frozen=True)
class GroupedPrediction:
    true_label: int
    base_pred: int
    method_pred: int
    groups: tuple[int, ...] = ()

    def pred(self, which: str) -> int:
        if which == BASE:
            return self.base_pred
        if which == METHOD:
            return self.method_pred
        raise InvalidInputError(f"which must be 'base' or 'method', got {which!r}")


@dataclass(frozen=True)
class MetricsReport:
    n: int
    average_accuracy: float
    per_group_accuracy: tuple[float, ...]
    worst_group_accuracy: float
    worst_group_index: int
    corrections: int
    corruptions: int
    ccr: float | None  # None when corrections > 0 and corruptions == 0


def average_accuracy(preds: Sequence[GroupedPrediction], which: str = METHOD) -> float:
    if not preds:
        raise InvalidInputError("no predictions")
    return sum(p.pred(which) == p.true_label for p in preds) / len(preds)


def per_group_accuracy(preds: Sequence[GroupedPrediction], which: str = METHOD,
                       num_groups: int = 8) -> np.ndarray:
    """Accuracy per group, NaN for groups without members.  A sample counts
    toward every group it belongs to."""
    correct = np.zeros(num_groups)
    total = np.zeros(num_groups)
    for p in preds:
        hit = p.pred(which) == p.true_label
        for g in p.groups:
            if not 0 <= g < num_groups:
                raise InvalidInputError(f"group {g} outside [0, {num_groups})")
            total[g] += 1
            correct[g] += hit
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, correct / np.maximum(total, 1), np.nan)


def worst_group_accuracy(preds: Sequence[GroupedPrediction], which: str = METHOD,
                         num_groups: int = 8) -> tuple[float, int]:
    acc = per_group_accuracy(preds, which, num_groups)
    if np.all(np.isnan(acc)):
        raise InvalidInputError("no sample belongs to any group")
    idx = int(np.nanargmin(acc))
    return float(acc[idx]), idx


def ccr(preds: Sequence[GroupedPrediction]) -> tuple[int, int, float | None]:
    """(corrections, corruptions, ratio).

    The ratio is 1.0 when nothing flipped and ``None`` (undefined) when there
    are corrections but no corruptions.
    """
    if not preds:
        raise InvalidInputError("no predictions")
    corrections = sum(p.base_pred != p.true_label and p.method_pred == p.true_label for p in preds)
    corruptions = sum(p.base_pred == p.true_label and p.method_pred != p.true_label for p in preds)
    if corruptions == 0:
        return corrections, 0, (1.0 if corrections == 0 else None)
    return corrections, corruptions, corrections / corruptions


def evaluate(preds: Sequence[GroupedPrediction], num_groups: int = 8) -> MetricsReport:
    per_group = per_group_accuracy(preds, METHOD, num_groups)
    wga, widx = worst_group_accuracy(preds, METHOD, num_groups)
    corrections, corruptions, ratio = ccr(preds)
    return MetricsReport(
        n=len(preds),
        average_accuracy=average_accuracy(preds, METHOD),
        per_group_accuracy=tuple(float(a) for a in per_group),
        worst_group_accuracy=wga,
        worst_group_index=widx,
        corrections=corrections,
        corruptions=corruptions,
        ccr=ratio,
    )


# -- across-seed summaries ---------------------------------------------------


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (0 for a single value)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return float("nan"), float("nan")
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def _fmt_spread(std: float, digits: int) -> str:
    text = f"{std:.{digits}f}"
    return text[1:] if text.startswith("0.") else text


def format_delta(mean: float, std: float) -> str:
    """Percentage-point delta as ``+2.9 (.1)``."""
    text = f"{mean:+.1f}"
    if text == "-0.0":
        text = "+0.0"
    return f"{text} ({_fmt_spread(std, 1)})"


def format_ccr(mean: float | None, std: float | None) -> str:
    if mean is None or np.isnan(mean):
        return "undef"
    return f"{mean:.2f} ({_fmt_spread(std, 2)})"
