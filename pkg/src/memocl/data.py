"""Labeled text datasets, synthetic lexical shift, and seeded test streams."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .augment import Rng, derive_seed
from .errors import InvalidInputError, ParseError, ValidationError
from .model import split_words

FORMAT_VERSION = 1
NOISE_TOKEN = "oov"


@dataclass(frozen=True)
class Record:
    text: str
    label: int
    groups: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(sorted(set(self.groups))))


@dataclass(frozen=True)
class Dataset:
    records: tuple[Record, ...]
    num_classes: int = 2
    num_groups: int = 8

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if not self.records:
            raise ValidationError("dataset is empty")
        for i, rec in enumerate(self.records):
            _check_record(rec, self.num_classes, self.num_groups, f"record {i}")

    def __len__(self):
        return len(self.records)

    @property
    def labels(self) -> list[int]:
        return [r.label for r in self.records]


def _check_record(rec: Record, num_classes: int, num_groups: int, where: str) -> None:
    if not 0 <= rec.label < num_classes:
        raise ValidationError(f"{where}: label {rec.label} outside [0, {num_classes})")
    for g in rec.groups:
        if not 0 <= g < num_groups:
            raise ValidationError(f"{where}: group {g} outside [0, {num_groups})")


def _read_jsonl(path, expected_format: str):
    """Yield (line number, object) pairs after checking the header record."""
    with open(path, encoding="utf-8") as fh:
        rows = [(i, line) for i, line in enumerate(fh, start=1) if line.strip()]
    if not rows:
        raise ValidationError(f"{path}: file is empty")
    parsed = []
    for lineno, line in rows:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, path, lineno) from None
        if not isinstance(obj, dict):
            raise ParseError("expected a JSON object", path, lineno)
        parsed.append((lineno, obj))
    lineno, header = parsed[0]
    if header.get("format") != expected_format or header.get("version") != FORMAT_VERSION:
        raise ParseError(
            f'expected header {{"format": "{expected_format}", "version": {FORMAT_VERSION}}}',
            path,
            lineno,
        )
    return header, parsed[1:]


def load_dataset(path) -> Dataset:
    header, rows = _read_jsonl(path, "dataset")
    num_classes = header.get("num_classes", 2)
    num_groups = header.get("num_groups", 8)
    records = []
    for lineno, obj in rows:
        try:
            text, label, groups = obj["text"], obj["label"], obj.get("groups", [])
        except KeyError as exc:
            raise ParseError(f"missing field {exc.args[0]!r}", path, lineno) from None
        if not isinstance(text, str) or not isinstance(label, int) or not isinstance(groups, list):
            raise ParseError("fields must be text: string, label: integer, groups: array", path, lineno)
        rec = Record(text, label, tuple(groups))
        _check_record(rec, num_classes, num_groups, f"{path}:{lineno}")
        records.append(rec)
    if not records:
        raise ValidationError(f"{path}: dataset has no records")
    return Dataset(tuple(records), num_classes, num_groups)


def dumps_dataset(ds: Dataset) -> str:
    header = {"format": "dataset", "version": FORMAT_VERSION,
              "num_classes": ds.num_classes, "num_groups": ds.num_groups}
    lines = [json.dumps(header)]
    for r in ds.records:
        lines.append(json.dumps({"text": r.text, "label": r.label, "groups": list(r.groups)},
                                ensure_ascii=False))
    return "\n".join(lines) + "\n"


def save_dataset(path, ds: Dataset) -> None:
    Path(path).write_text(dumps_dataset(ds), encoding="utf-8")


@dataclass(frozen=True)
class ShiftSpec:
    substitution_map: dict = field(default_factory=dict)
    substitution_coverage: float = 0.0
    noise_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("substitution_coverage", "noise_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {value}")
        overlap = set(self.substitution_map) & set(self.substitution_map.values())
        if overlap:
            raise ValidationError(f"substitution map chains through {sorted(overlap)}")


def load_shift_spec(path) -> ShiftSpec:
    _, rows = _read_jsonl(path, "shift")
    if len(rows) != 1:
        raise ParseError("shift spec file must hold exactly one record after the header", path)
    lineno, obj = rows[0]
    try:
        return ShiftSpec(
            substitution_map=dict(obj["substitution_map"]),
            substitution_coverage=float(obj["substitution_coverage"]),
            noise_rate=float(obj["noise_rate"]),
            seed=int(obj["seed"]),
        )
    except KeyError as exc:
        raise ParseError(f"missing field {exc.args[0]!r}", path, lineno) from None


def save_shift_spec(path, spec: ShiftSpec) -> None:
    body = {
        "substitution_map": spec.substitution_map,
        "substitution_coverage": spec.substitution_coverage,
        "noise_rate": spec.noise_rate,
        "seed": spec.seed,
    }
    text = json.dumps({"format": "shift", "version": FORMAT_VERSION}) + "\n" + json.dumps(body) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def apply_shift(ds: Dataset, spec: ShiftSpec) -> Dataset:
    """Label-preserving lexical shift.

    Per token, in order: a mapped token is rewritten with probability
    ``substitution_coverage``; then any token becomes :data:`NOISE_TOKEN`
    with probability ``noise_rate``.  Records with no rewritten token keep
    their original text.
    """
    if spec.substitution_coverage == 0.0 and spec.noise_rate == 0.0:
        return ds
    rng = Rng(spec.seed)
    subst = spec.substitution_map
    out = []
    for rec in ds.records:
        words = split_words(rec.text)
        changed = False
        for i, w in enumerate(words):
            if w in subst and rng.random() < spec.substitution_coverage:
                words[i] = subst[w]
                changed = True
            if rng.random() < spec.noise_rate:
                words[i] = NOISE_TOKEN
                changed = True
        text = " ".join(words) if changed else rec.text
        out.append(Record(text, rec.label, rec.groups))
    return Dataset(tuple(out), ds.num_classes, ds.num_groups)


@dataclass(frozen=True)
class StreamRecord:
    sample_id: int
    words: tuple[str, ...]
    label: int | None
    groups: tuple[int, ...]
    seed: int


def to_stream_record(ds: Dataset, index: int, stream_seed: int) -> StreamRecord:
    rec = ds.records[index]
    return StreamRecord(index, tuple(split_words(rec.text)), rec.label, rec.groups,
                        derive_seed(stream_seed, index))


def stream(ds: Dataset, seed: int) -> Iterator[StreamRecord]:
    """Yield every record once in a seed-determined order.

    Each record carries ``seed XOR dataset_index`` for its augmentation RNG,
    so a sample's randomness does not depend on its stream position.
    """
    order = list(range(len(ds)))
    rng = Rng(seed)
    for i in range(len(order) - 1, 0, -1):
        j = rng.below(i + 1)
        order[i], order[j] = order[j], order[i]
    for idx in order:
        yield to_stream_record(ds, idx, seed)


def check_stream_nonempty(records) -> list:
    records = list(records)
    if not records:
        raise InvalidInputError("stream is empty")
    return records
