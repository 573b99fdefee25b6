"""Text augmenters and the uniform sampler over them.

Three augmenters are supported: lexicon synonym replacement, word-vector
neighbour replacement and rule-based paraphrasing.  All randomness goes
through a single :class:`Rng` so a whole augmentation stream is
reproducible from one seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, ParseError, ValidationError

MASK64 = (1 << 64) - 1

LEXICON = "lexicon"
EMBEDDING = "embedding"
PARAPHRASE = "paraphrase"


class Rng:
    """Seeded generator backed by CPython's MT19937 (:class:`random.Random`).

    Integer seeds are reduced to 64 bits.  ``random()`` and ``below()`` are
    built on ``getrandbits`` and produce the same sequence on every platform.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self._gen = random.Random(self.seed)

    def random(self) -> float:
        return self._gen.random()

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        return self._gen.randrange(n)

    def choice(self, seq):
        return seq[self.below(len(seq))]


def derive_seed(stream_seed: int, index: int) -> int:
    """Per-sample seed: ``stream_seed XOR index`` on 64 bits."""
    return (int(stream_seed) ^ int(index)) & MASK64


@dataclass(frozen=True)
class SynonymLexicon:
    entries: dict

    def __post_init__(self):
        clean = {}
        for key, syns in self.entries.items():
            syns = tuple(syns)
            if not key or not syns or not all(syns):
                raise ValidationError(f"lexicon entry {key!r} is empty")
            if key in syns:
                raise ValidationError(f"lexicon entry {key!r} lists itself")
            clean[key] = syns
        object.__setattr__(self, "entries", clean)

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True, eq=False)
class WordVectorTable:
    words: tuple[str, ...]
    vectors: np.ndarray
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        words = tuple(self.words)
        vecs = np.array(self.vectors, dtype=np.float64)
        if vecs.ndim != 2 or vecs.shape[0] != len(words) or vecs.shape[1] < 1:
            raise ValidationError(f"vector matrix shape {vecs.shape} does not fit {len(words)} words")
        if not np.all(np.isfinite(vecs)):
            raise ValidationError("word vectors must be finite")
        index = {w: i for i, w in enumerate(words)}
        if len(index) != len(words):
            raise ValidationError("word-vector table has duplicate words")
        vecs.setflags(write=False)
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "vectors", vecs)
        object.__setattr__(self, "_index", index)

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def similarities(self, word: str) -> np.ndarray:
        """Cosine similarity of ``word`` to every row; zero-norm rows score 0."""
        norms = np.linalg.norm(self.vectors, axis=1)
        safe = np.where(norms > 0, norms, 1.0)
        unit = self.vectors / safe[:, None]
        return unit @ unit[self._index[word]]

    def neighbors(self, word: str, k: int) -> tuple[str, ...]:
        return _neighbors(self, word, k)


@lru_cache(maxsize=65536)
def _neighbors(table: WordVectorTable, word: str, k: int) -> tuple[str, ...]:
    i = table._index[word]
    # rounding absorbs float noise so equal cosines tie; the stable sort then keeps table order
    sims = np.round(table.similarities(word), 12)
    order = [j for j in np.argsort(-sims, kind="stable") if j != i]
    return tuple(table.words[j] for j in order[:k])


@dataclass(frozen=True)
class ParaphraseRuleSet:
    rules: tuple = ()

    def __post_init__(self):
        rules = tuple((tuple(p), tuple(r)) for p, r in self.rules)
        for pattern, _ in rules:
            if not pattern:
                raise ValidationError("paraphrase pattern must be nonempty")
        object.__setattr__(self, "rules", rules)

    def match_at(self, tokens: Sequence[str], i: int):
        """First rule (in rule order) whose pattern starts at position ``i``."""
        for pattern, repl in self.rules:
            if tuple(tokens[i : i + len(pattern)]) == pattern:
                return pattern, repl
        return None


@dataclass(frozen=True)
class AugmenterSet:
    lexicon: SynonymLexicon | None = None
    table: WordVectorTable | None = None
    rules: ParaphraseRuleSet | None = None
    replacement_rate: float = 0.3
    k_nn: int = 3

    def __post_init__(self):
        if not 0.0 < self.replacement_rate <= 1.0:
            raise InvalidInputError(f"replacement_rate must be in (0, 1], got {self.replacement_rate}")
        if self.k_nn < 1:
            raise InvalidInputError("k_nn must be >= 1")

    @property
    def members(self) -> tuple[str, ...]:
        present = []
        if self.lexicon is not None:
            present.append(LEXICON)
        if self.table is not None:
            present.append(EMBEDDING)
        if self.rules is not None:
            present.append(PARAPHRASE)
        return tuple(present)

    @classmethod
    def identity(cls) -> "AugmenterSet":
        return cls(rules=ParaphraseRuleSet())

    def describe(self) -> dict:
        return {
            "members": list(self.members),
            "replacement_rate": self.replacement_rate,
            "k_nn": self.k_nn,
            "lexicon_entries": len(self.lexicon) if self.lexicon else 0,
            "table_words": len(self.table.words) if self.table else 0,
            "rules": len(self.rules.rules) if self.rules else 0,
        }


def _check_rate(rate: float) -> None:
    if not 0.0 < rate <= 1.0:
        raise InvalidInputError(f"replacement rate must be in (0, 1], got {rate}")


def sample_augmenter(augs: AugmenterSet, rng: Rng) -> str:
    members = augs.members
    if not members:
        raise InvalidInputError("augmenter set is empty")
    return members[rng.below(len(members))]


def lexicon_replace(tokens: Sequence[str], lexicon: SynonymLexicon, rate: float, rng: Rng) -> list[str]:
    _check_rate(rate)
    out = list(tokens)
    for i, tok in enumerate(out):
        syns = lexicon.entries.get(tok)
        if syns is not None and rng.random() < rate:
            out[i] = rng.choice(syns)
    return out


def embedding_replace(tokens: Sequence[str], table: WordVectorTable, k_nn: int, rate: float, rng: Rng) -> list[str]:
    _check_rate(rate)
    if k_nn < 1:
        raise InvalidInputError("k_nn must be >= 1")
    out = list(tokens)
    for i, tok in enumerate(out):
        if tok in table and rng.random() < rate:
            nbrs = table.neighbors(tok, k_nn)
            if nbrs:
                out[i] = rng.choice(nbrs)
    return out


def paraphrase(tokens: Sequence[str], rules: ParaphraseRuleSet, rng: Rng) -> list[str]:
    """Scan left to right; each match is rewritten with probability 1/2.

    A declined match is still consumed, so matches never overlap.
    """
    out: list[str] = []
    tokens = list(tokens)
    i = 0
    while i < len(tokens):
        hit = rules.match_at(tokens, i) if rules.rules else None
        if hit is None:
            out.append(tokens[i])
            i += 1
            continue
        pattern, repl = hit
        if rng.random() < 0.5:
            out.extend(repl)
        else:
            out.extend(pattern)
        i += len(pattern)
    return out


def apply_augmenter(name: str, tokens: Sequence[str], augs: AugmenterSet, rng: Rng) -> list[str]:
    if name == LEXICON:
        return lexicon_replace(tokens, augs.lexicon, augs.replacement_rate, rng)
    if name == EMBEDDING:
        return embedding_replace(tokens, augs.table, augs.k_nn, augs.replacement_rate, rng)
    if name == PARAPHRASE:
        return paraphrase(tokens, augs.rules, rng)
    raise InvalidInputError(f"unknown augmenter {name!r}")


def augment(tokens: Sequence[str], augs: AugmenterSet, rng: Rng) -> list[str]:
    return apply_augmenter(sample_augmenter(augs, rng), tokens, augs, rng)


# -- resource files ---------------------------------------------------------


def _lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if line.strip():
                yield lineno, line


def load_lexicon(path) -> SynonymLexicon:
    entries = {}
    for lineno, line in _lines(path):
        if "\t" not in line:
            raise ParseError("expected 'word<TAB>syn1,syn2,...'", path, lineno)
        key, rest = line.split("\t", 1)
        syns = [s.strip() for s in rest.split(",")]
        if not key.strip() or not all(syns):
            raise ParseError("empty word or synonym", path, lineno)
        entries[key.strip()] = syns
    return SynonymLexicon(entries)


def save_lexicon(path, lexicon: SynonymLexicon) -> None:
    text = "".join(f"{k}\t{','.join(v)}\n" for k, v in lexicon.entries.items())
    Path(path).write_text(text, encoding="utf-8")


def load_word_vectors(path) -> WordVectorTable:
    lines = _lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise ParseError("empty word-vector file", path) from None
    try:
        count, width = (int(x) for x in header.split())
    except ValueError:
        raise ParseError("header must be 'V k'", path, lineno) from None
    words, rows = [], []
    for lineno, line in lines:
        parts = line.split()
        if len(parts) != width + 1:
            raise ParseError(f"expected word and {width} values", path, lineno)
        try:
            rows.append([float(x) for x in parts[1:]])
        except ValueError:
            raise ParseError("non-numeric vector entry", path, lineno) from None
        words.append(parts[0])
    if len(words) != count:
        raise ParseError(f"header declares {count} words, found {len(words)}", path)
    return WordVectorTable(tuple(words), np.array(rows).reshape(count, width))


def save_word_vectors(path, table: WordVectorTable) -> None:
    lines = [f"{len(table.words)} {table.width}"]
    for w, v in zip(table.words, table.vectors):
        lines.append(w + " " + " ".join(format(float(x), ".17g") for x in v))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_rules(path) -> ParaphraseRuleSet:
    rules = []
    for lineno, line in _lines(path):
        if "\t" not in line:
            raise ParseError("expected 'pattern<TAB>replacement'", path, lineno)
        pat, repl = line.split("\t", 1)
        if not pat.split():
            raise ParseError("empty pattern", path, lineno)
        rules.append((pat.split(), repl.split()))
    return ParaphraseRuleSet(tuple(rules))


def save_rules(path, rules: ParaphraseRuleSet) -> None:
    text = "".join(f"{' '.join(p)}\t{' '.join(r)}\n" for p, r in rules.rules)
    Path(path).write_text(text, encoding="utf-8")


def load_augmenter_set(
    lexicon=None, vectors=None, rules=None, replacement_rate: float = 0.3, k_nn: int = 3
) -> AugmenterSet:
    return AugmenterSet(
        lexicon=load_lexicon(lexicon) if lexicon else None,
        table=load_word_vectors(vectors) if vectors else None,
        rules=load_rules(rules) if rules else None,
        replacement_rate=replacement_rate,
        k_nn=k_nn,
    )
