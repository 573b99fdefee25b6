"""Experiment plumbing: per-seed runs, outcome logs, and comparison reports."""

from __future__ import annotations

import json
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import baselines
from .adapt import CONTINUAL, AdaptConfig, run_stream
from .augment import AugmenterSet, Rng
from .data import Dataset, stream
from .errors import InvalidInputError
from .metrics import GroupedPrediction, ccr, format_ccr, format_delta, mean_std, average_accuracy, worst_group_accuracy
from .model import ModelParams, Vocabulary, predict

BASELINE = "baseline"
TTA_METHODS = {
    "tta-hard": baselines.HARD_VOTE,
    "tta-soft": baselines.SOFT_VOTE,
    "tta-average": baselines.LOGIT_AVERAGE,
    "tta-weighted": baselines.CLASS_WEIGHTED,
}
EVAL_METHODS = (BASELINE, *TTA_METHODS)
METHOD_ORDER = (BASELINE, "tta-hard", "tta-soft", "tta-average", "tta-weighted",
                "memo", "memo+smf", "memo-cl", "memo-cl+smf")
DISPLAY_NAMES = {
    BASELINE: "Baseline",
    "tta-hard": "TTA majority hard-voting",
    "tta-soft": "TTA majority soft-voting",
    "tta-average": "TTA average",
    "tta-weighted": "TTA class weighted",
    "memo": "MEMO",
    "memo+smf": "MEMO + SMF",
    "memo-cl": "MEMO-CL",
    "memo-cl+smf": "MEMO-CL + SMF",
}


def adapt_method_name(cfg: AdaptConfig) -> str:
    name = "memo-cl" if cfg.mode == CONTINUAL else "memo"
    return name + "+smf" if cfg.smf_enabled else name


def run_adapt(params: ModelParams, vocab: Vocabulary, ds: Dataset, cfg: AdaptConfig,
              augs: AugmenterSet, seed: int) -> tuple[list[dict], ModelParams]:
    """Adapt over ``ds`` streamed with ``seed``; one log row per sample."""
    records = list(stream(ds, seed))
    outcomes, final = run_stream(params, records, cfg, augs, vocab)
    method = adapt_method_name(cfg)
    rows = []
    for rec, out in zip(records, outcomes):
        rows.append({
            "sample_id": rec.sample_id,
            "method": method,
            "seed": seed,
            "base_label": predict(params, vocab.encode(rec.words)),
            "pre_adapt_label": out.base_label,
            "predicted_label": out.predicted_label,
            "true_label": rec.label,
            "groups": list(rec.groups),
            "loss_before": out.loss_before,
            "loss_after": out.loss_after,
            "accepted": out.accepted_count,
            "rejected": out.rejected_count,
            "attempts": out.attempts,
            "fallback": out.fallback,
        })
    return rows, final


def calibration_pool(params: ModelParams, vocab: Vocabulary, calib: Dataset, augs: AugmenterSet,
                     n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    recs = list(stream(calib, seed))
    pool = np.stack([
        baselines.augmentation_logits(params, r.words, augs, n, Rng(r.seed), vocab) for r in recs
    ])
    return pool, np.array([r.label for r in recs])


def run_evaluate(params: ModelParams, vocab: Vocabulary, ds: Dataset, method: str,
                 augs: AugmenterSet | None, num_aug: int, seed: int, weights=None) -> list[dict]:
    """Frozen-model predictions (baseline or a TTA aggregate), one row per sample."""
    if method not in EVAL_METHODS:
        raise InvalidInputError(f"unknown method {method!r}; expected one of {', '.join(EVAL_METHODS)}")
    rows = []
    for rec in stream(ds, seed):
        x = vocab.encode(rec.words)
        base = predict(params, x)
        if method == BASELINE:
            pred = base
        else:
            pred = baselines.predict_tta(params, rec.words, TTA_METHODS[method], augs, num_aug,
                                         Rng(rec.seed), vocab, weights)
        rows.append({
            "sample_id": rec.sample_id,
            "method": method,
            "seed": seed,
            "base_label": base,
            "predicted_label": pred,
            "true_label": rec.label,
            "groups": list(rec.groups),
        })
    return rows


# -- files ------------------------------------------------------------------


def write_jsonl(path, rows) -> None:
    text = "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows)
    Path(path).write_text(text, encoding="utf-8")


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_manifest(path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- reports ----------------------------------------------------------------


def _predictions(rows) -> list[GroupedPrediction]:
    out = []
    for r in rows:
        if r.get("true_label") is None:
            raise InvalidInputError(f"sample {r['sample_id']} has no true label")
        out.append(GroupedPrediction(r["true_label"], r["base_label"], r["predicted_label"],
                                     tuple(r.get("groups", ()))))
    return out


def seed_metrics(rows, num_groups: int = 8) -> dict:
    """Metrics for one (method, seed) log, with deltas against its base predictions."""
    preds = _predictions(rows)
    aa, aa_base = average_accuracy(preds, "method"), average_accuracy(preds, "base")
    wga, _ = worst_group_accuracy(preds, "method", num_groups)
    wga_base, _ = worst_group_accuracy(preds, "base", num_groups)
    corrections, corruptions, ratio = ccr(preds)
    return {
        "aa": aa, "aa_base": aa_base, "aa_delta": aa - aa_base,
        "wga": wga, "wga_base": wga_base, "wga_delta": wga - wga_base,
        "corrections": corrections, "corruptions": corruptions, "ccr": ratio,
    }


def group_logs(rows) -> dict:
    """Split log rows into ``{method: {seed: rows}}``."""
    grouped: dict = defaultdict(lambda: defaultdict(list))
    for r in rows:
        grouped[r["method"]][r["seed"]].append(r)
    return grouped


def check_aligned(grouped) -> None:
    """Every (method, seed) log must cover the same sample ids."""
    reference = None
    for method, by_seed in grouped.items():
        for seed, rows in by_seed.items():
            ids = sorted(r["sample_id"] for r in rows)
            if reference is None:
                reference = (method, seed, ids)
            elif ids != reference[2]:
                raise InvalidInputError(
                    f"sample ids of {method} seed {seed} differ from {reference[0]} seed {reference[1]}"
                )


def _method_key(name: str):
    return (METHOD_ORDER.index(name), name) if name in METHOD_ORDER else (len(METHOD_ORDER), name)


def summarize(rows, num_groups: int = 8) -> list[dict]:
    grouped = group_logs(rows)
    if not grouped:
        raise InvalidInputError("no outcome rows to report")
    check_aligned(grouped)
    summary = []
    for method in sorted(grouped, key=_method_key):
        by_seed = grouped[method]
        seeds = sorted(by_seed)
        per_seed = [seed_metrics(by_seed[s], num_groups) for s in seeds]
        entry = {"method": method, "seeds": seeds}
        for key in ("aa", "aa_base", "aa_delta", "wga", "wga_base", "wga_delta"):
            entry[f"{key}_mean"], entry[f"{key}_std"] = mean_std([m[key] for m in per_seed])
        ratios = [m["ccr"] for m in per_seed if m["ccr"] is not None]
        if ratios:
            entry["ccr_mean"], entry["ccr_std"] = mean_std(ratios)
        else:
            entry["ccr_mean"] = entry["ccr_std"] = None
        entry["corrections"] = [m["corrections"] for m in per_seed]
        entry["corruptions"] = [m["corruptions"] for m in per_seed]
        summary.append(entry)
    return summary


def format_report(summary: list[dict]) -> str:
    """Aligned text table: baseline absolute row, then deltas per method."""
    header = ("Model", "AA", "WGA", "CCR")
    lines = []
    base = summary[0]
    lines.append((DISPLAY_NAMES[BASELINE],
                  f"{100 * base['aa_base_mean']:.1f}", f"{100 * base['wga_base_mean']:.1f}", ""))
    for entry in summary:
        name = DISPLAY_NAMES.get(entry["method"], entry["method"])
        if entry["method"] == BASELINE:
            name = f"{name} (vs itself)"
        lines.append((
            name,
            format_delta(100 * entry["aa_delta_mean"], 100 * entry["aa_delta_std"]),
            format_delta(100 * entry["wga_delta_mean"], 100 * entry["wga_delta_std"]),
            format_ccr(entry["ccr_mean"], entry["ccr_std"]),
        ))
    widths = [max(len(row[i]) for row in [header, *lines]) for i in range(4)]
    fmt = lambda row: "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
    rule = "-" * len(fmt(tuple("-" * w for w in widths)))
    return "\n".join([fmt(header), rule, *(fmt(r) for r in lines)]) + "\n"
