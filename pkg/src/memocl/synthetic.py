"""Synthetic toxicity-style corpus with a controllable lexical shift.

Labels are carried by cue words.  The shift respells cue words (``stupid`` ->
``stup1d``); the respellings are in the word-vector vocabulary but never in
the source training data, so a source model cannot read them.  The shipped
augmentation resources map some respellings back toward known words, which
is what test-time augmentation and adaptation can exploit.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .augment import (
    ParaphraseRuleSet,
    SynonymLexicon,
    WordVectorTable,
    save_lexicon,
    save_rules,
    save_word_vectors,
)
from .data import Dataset, Record, ShiftSpec, save_dataset, save_shift_spec

TOXIC_CUES = (
    "stupid", "idiot", "dumb", "awful", "pathetic", "moron", "hate", "disgusting",
    "loser", "garbage", "worthless", "ugly", "trash", "clown", "ignorant", "nasty",
)
BENIGN_CUES = (
    "thanks", "great", "agree", "helpful", "kind", "interesting", "respect", "wonderful",
    "support", "appreciate", "nice", "thoughtful", "welcome", "fair", "honest", "excellent",
)
# weakly predictive words the shift leaves alone
MILD_TOXIC = ("whatever", "ridiculous", "annoying", "wrong", "lies", "shut", "crap", "seriously")
MILD_BENIGN = ("please", "hope", "good", "well", "true", "glad", "love", "sure")
GROUP_WORDS = ("male", "female", "lgbtq", "christian", "muslim", "religion", "black", "white")
FILLERS = (
    "the", "a", "this", "that", "article", "people", "city", "council", "vote", "policy",
    "time", "year", "comment", "story", "really", "just", "think", "said", "news", "government",
    "about", "with", "they", "their", "he", "she", "we", "you", "is", "was", "are", "be",
    "for", "on", "in", "of", "and", "to", "it", "not", "do", "i", "very", "tax", "school",
    "money", "road", "plan", "law", "state", "local", "paper", "writer", "reader", "point",
)
PHRASE_RULES = (
    (("do", "not"), ("don't",)),
    (("it", "is"), ("it's",)),
    (("i", "think"), ("i", "believe")),
    (("very",), ("really",)),
    (("they", "are"), ("they're",)),
    (("this", "article"), ("this", "story")),
)

# identity terms that co-occur with toxic cues in the source split
BIASED_GROUPS = (2, 4, 6)

_CONSONANTS = "bdfgklmnprtv"
_VOWELS = "aeiou"


def filler_words(n: int) -> tuple[str, ...]:
    """The common filler words, extended with made-up two-syllable words."""
    words = list(FILLERS[:n])
    for c1 in _CONSONANTS:
        for v1 in _VOWELS:
            for c2 in _CONSONANTS:
                for v2 in _VOWELS:
                    if len(words) >= n:
                        return tuple(words)
                    words.append(c1 + v1 + c2 + v2 + "n")
    return tuple(words)


_LEET = str.maketrans({"a": "4", "e": "3", "i": "1", "o": "0", "s": "5"})


def respell(word: str) -> str:
    out = word.translate(_LEET)
    return out if out != word else word + "z"


@dataclass(frozen=True)
class FixtureConfig:
    seed: int = 13
    n_train: int = 2000
    n_calib: int = 500
    n_test: int = 2000
    coverage: float = 0.8
    noise: float = 0.05
    min_len: int = 6
    max_len: int = 10
    n_cue_types: int = 4
    cue_counts: tuple = (1, 2, 3)
    cue_count_probs: tuple = (0.4, 0.4, 0.2)
    opposite_cue_rate: float = 0.2
    n_mild: int = 4
    mild_purity: float = 0.75
    mild_counts: tuple = (0, 1, 2)
    mild_count_probs: tuple = (0.1, 0.4, 0.5)
    n_fillers: int = 500
    group_count_probs: tuple = (0.6, 0.35, 0.05)
    group_bias: float = 2.5
    vector_width: int = 12
    slot_weight: float = 1.0
    class_weight: float = 0.4
    respell_jitter: float = 0.25
    lexicon_respell_fraction: float = 0.5
    lexicon_antonym_rate: float = 0.5


def _sentence(rng: np.random.Generator, label: int, cfg: FixtureConfig, group_bias: np.ndarray):
    cues = (TOXIC_CUES if label == 1 else BENIGN_CUES)[: cfg.n_cue_types]
    other = (BENIGN_CUES if label == 1 else TOXIC_CUES)[: cfg.n_cue_types]
    length = int(rng.integers(cfg.min_len, cfg.max_len + 1))
    n_cues = int(rng.choice(cfg.cue_counts, p=cfg.cue_count_probs))
    words = [cues[i] for i in rng.integers(0, len(cues), n_cues)]
    if rng.random() < cfg.opposite_cue_rate:
        words.append(other[int(rng.integers(0, len(other)))])
    for _ in range(int(rng.choice(cfg.mild_counts, p=cfg.mild_count_probs))):
        own = rng.random() < cfg.mild_purity
        pool = (MILD_TOXIC if (label == 1) == own else MILD_BENIGN)[: cfg.n_mild]
        words.append(pool[int(rng.integers(0, len(pool)))])
    n_groups = int(rng.choice([0, 1, 2], p=cfg.group_count_probs))
    p = group_bias[label] / group_bias[label].sum()
    groups = sorted(set(int(g) for g in rng.choice(len(GROUP_WORDS), n_groups, p=p)))
    words += [GROUP_WORDS[g] for g in groups]
    fillers = filler_words(cfg.n_fillers)
    while len(words) < length:
        words.append(fillers[int(rng.integers(0, len(fillers)))])
    order = rng.permutation(len(words))
    return " ".join(words[i] for i in order), groups


def make_dataset(n: int, rng: np.random.Generator, cfg: FixtureConfig, group_bias: np.ndarray) -> Dataset:
    records = []
    for _ in range(n):
        label = int(rng.random() < 0.5)
        text, groups = _sentence(rng, label, cfg, group_bias)
        records.append(Record(text, label, tuple(groups)))
    return Dataset(tuple(records), 2, len(GROUP_WORDS))


def make_word_vectors(rng: np.random.Generator, cfg: FixtureConfig) -> WordVectorTable:
    """Cue pairs share a slot direction; the class direction separates them.

    Respellings sit next to their source word, so a respelling's nearest
    neighbours are its source word, then same-slot and same-class words.
    """
    k = cfg.vector_width
    class_dir = rng.normal(size=k)
    class_dir /= np.linalg.norm(class_dir)
    words, vecs = [], []
    for tox, ben in zip(TOXIC_CUES, BENIGN_CUES):
        slot = rng.normal(size=k)
        slot /= np.linalg.norm(slot)
        for word, sign in ((tox, 1.0), (ben, -1.0)):
            v = cfg.slot_weight * slot + sign * cfg.class_weight * class_dir + 0.3 * rng.normal(size=k) / np.sqrt(k)
            words.append(word)
            vecs.append(v)
            words.append(respell(word))
            vecs.append(v + cfg.respell_jitter * rng.normal(size=k) / np.sqrt(k))
    for word in MILD_TOXIC + MILD_BENIGN + GROUP_WORDS + filler_words(max(cfg.n_fillers, len(FILLERS))):
        words.append(word)
        vecs.append(rng.normal(size=k))
    return WordVectorTable(tuple(words), np.array(vecs))


def make_lexicon(rng: np.random.Generator, cfg: FixtureConfig) -> SynonymLexicon:
    entries = {}
    for cues, opposite in ((TOXIC_CUES, BENIGN_CUES), (BENIGN_CUES, TOXIC_CUES)):
        for i, word in enumerate(cues):
            entries[word] = [cues[(i + 1) % len(cues)], cues[(i + 5) % len(cues)]]
            if rng.random() < cfg.lexicon_antonym_rate:
                entries[word].append(opposite[i])
            if rng.random() < cfg.lexicon_respell_fraction:
                entries[respell(word)] = [word]
    entries["people"] = ["folks"]
    entries["city"] = ["town"]
    entries["policy"] = ["plan"]
    entries["news"] = ["paper"]
    return SynonymLexicon(entries)


def make_rules() -> ParaphraseRuleSet:
    return ParaphraseRuleSet(PHRASE_RULES)


def make_shift_spec(cfg: FixtureConfig) -> ShiftSpec:
    mapping = {w: respell(w) for w in TOXIC_CUES + BENIGN_CUES}
    return ShiftSpec(mapping, cfg.coverage, cfg.noise, cfg.seed)


@dataclass(frozen=True)
class Fixture:
    train: Dataset
    calib: Dataset
    test: Dataset
    shift: ShiftSpec
    table: WordVectorTable
    lexicon: SynonymLexicon
    rules: ParaphraseRuleSet


def build_fixture(cfg: FixtureConfig = FixtureConfig()) -> Fixture:
    rng = np.random.default_rng(cfg.seed)
    group_bias = np.ones((2, len(GROUP_WORDS)))
    # identity terms co-occur with toxic cues more often in the source data
    group_bias[1, list(BIASED_GROUPS)] = cfg.group_bias
    train = make_dataset(cfg.n_train, rng, cfg, group_bias)
    calib = make_dataset(cfg.n_calib, rng, cfg, group_bias)
    test = make_dataset(cfg.n_test, rng, cfg, np.ones((2, len(GROUP_WORDS))))
    table = make_word_vectors(rng, cfg)
    lexicon = make_lexicon(rng, cfg)
    rules = make_rules()
    return Fixture(train, calib, test, make_shift_spec(cfg), table, lexicon, rules)


def write_fixture(fx: Fixture, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "train": out / "train.jsonl",
        "calib": out / "calib.jsonl",
        "test": out / "test.jsonl",
        "shift": out / "shift.jsonl",
        "vectors": out / "vectors.txt",
        "lexicon": out / "lexicon.tsv",
        "rules": out / "rules.tsv",
    }
    save_dataset(paths["train"], fx.train)
    save_dataset(paths["calib"], fx.calib)
    save_dataset(paths["test"], fx.test)
    save_shift_spec(paths["shift"], fx.shift)
    save_word_vectors(paths["vectors"], fx.table)
    save_lexicon(paths["lexicon"], fx.lexicon)
    save_rules(paths["rules"], fx.rules)
    return paths
