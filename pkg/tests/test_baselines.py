import itertools
import json
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memocl import baselines
from memocl.augment import AugmenterSet, Rng
from memocl.baselines import (
    CLASS_WEIGHTED,
    HARD_VOTE,
    LOGIT_AVERAGE,
    SOFT_VOTE,
    aggregate,
    augmentation_logits,
    class_weighted,
    fit_class_weights,
    hard_vote,
    logit_average,
    predict_tta,
    soft_vote,
)
from memocl.errors import InvalidInputError
from memocl.model import forward, softmax

from .data.make_golden import toy_augmenters, toy_model, tta_golden

DATA = Path(__file__).parent / "data"

logit_rows = st.integers(1, 8).flatmap(lambda n: st.integers(2, 4).flatmap(
    lambda c: st.lists(st.lists(st.floats(-20, 20), min_size=c, max_size=c), min_size=n, max_size=n)))


def counting_oracle(labels):
    counts = Counter(labels)
    best = max(counts.values())
    return min(k for k, v in counts.items() if v == best)


class TestHardVote:
    def test_majority(self):
        assert hard_vote([1, 1, 0]) == 1

    def test_tie_goes_to_smallest(self):
        assert hard_vote([0, 1]) == 0
        assert hard_vote([2, 1, 1, 2]) == 1

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            hard_vote([])

    def test_exhaustive_against_counting(self):
        # every label list of length 1..12 over 3 classes, up to order
        checked = 0
        for n in range(1, 13):
            for combo in itertools.combinations_with_replacement(range(3), n):
                assert hard_vote(list(combo)) == counting_oracle(combo)
                assert hard_vote(list(reversed(combo))) == counting_oracle(combo)
                checked += 1
        assert checked == sum(len(list(itertools.combinations_with_replacement(range(3), n))) for n in range(1, 13))

    @given(st.lists(st.integers(0, 4), min_size=1, max_size=40))
    def test_random_against_counting(self, labels):
        assert hard_vote(labels) == counting_oracle(labels)


class TestSoftVote:
    def test_identical(self):
        assert soft_vote([(0.2, 0.5, 0.3)] * 4) == 1

    def test_arithmetic(self):
        assert soft_vote([(0.6, 0.4), (0.3, 0.7)]) == 1

    def test_uniform_tie(self):
        assert soft_vote([(0.5, 0.5), (0.5, 0.5)]) == 0

    def test_empty_and_ragged(self):
        with pytest.raises(InvalidInputError):
            soft_vote([])
        with pytest.raises(InvalidInputError):
            soft_vote([(0.5, 0.5), (0.2, 0.3, 0.5)])

    def test_mirrored_tie_survives_duplication(self):
        dists = list(softmax(np.array([[5.71875, 14.625], [14.625, 5.71875]])))
        assert soft_vote(dists) == soft_vote(dists * 2) == 0

    @given(logit_rows, st.integers(2, 4))
    def test_duplication_invariance(self, rows, k):
        dists = list(softmax(np.array(rows)))
        assert soft_vote(dists * k) == soft_vote(dists)


class TestLogitAverage:
    def test_identical(self):
        assert logit_average([(1.0, 3.0, 2.0)] * 3) == 1

    def test_arithmetic(self):
        rows = [(2.0, 0.0), (-4.0, 0.0)]
        assert logit_average(rows) == 1
        # mean probabilities (0.4496, 0.5504) also pick class 1
        assert soft_vote(softmax(np.array(rows))) == 1

    def test_differs_from_soft_vote(self):
        rows = [(3.0, 0.0), (-1.0, 0.0), (-1.0, 0.0)]
        assert logit_average(rows) == 0
        assert soft_vote(softmax(np.array(rows))) == 1

    def test_single(self):
        assert logit_average([(0.1, -2.0, 0.3)]) == 2

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            logit_average([])

    @given(logit_rows, st.floats(-50, 50))
    def test_shared_shift_invariance(self, rows, c):
        arr = np.array(rows)
        shift = np.linspace(-1, 1, arr.shape[1]) * c
        mean = arr.mean(axis=0)
        # skip near-ties where rounding may flip the argmax
        top = np.sort(mean)[-2:]
        if top[1] - top[0] < 1e-6:
            return
        assert logit_average(arr + shift) == int(np.argmax(mean + shift))
        assert logit_average(arr + 7.5) == logit_average(arr)


class TestClassWeighted:
    def test_weights_select_position(self):
        rows = [(1.0, 0.0), (0.0, 5.0)]
        assert class_weighted(rows, [1.0, 0.0]) == 0
        assert class_weighted(rows, [0.5, 0.5]) == 1

    @pytest.mark.parametrize("weights", [[1.0], [0.0, 0.0], [np.nan, 1.0], [np.inf, 1.0]])
    def test_invalid_weights(self, weights):
        with pytest.raises(InvalidInputError):
            class_weighted([(1.0, 0.0), (0.0, 1.0)], weights)

    def test_aggregate_needs_weights(self):
        with pytest.raises(InvalidInputError):
            aggregate(CLASS_WEIGHTED, np.zeros((2, 2)))

    def test_unknown_method(self):
        with pytest.raises(InvalidInputError):
            aggregate("median", np.zeros((2, 2)))


class TestFitClassWeights:
    def informative_pool(self, seed=0, s=60, n=4, c=3):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, c, size=s)
        pool = rng.normal(0.0, 2.0, size=(s, n, c))
        pool[np.arange(s), 0, labels] += 4.0
        return pool, labels

    def test_informative_position_gets_largest_weight(self):
        pool, labels = self.informative_pool()
        w = fit_class_weights(pool, labels, epochs=200)
        assert np.all(w[0] > w[1:])

    def test_zero_epochs_is_uniform(self):
        pool, labels = self.informative_pool()
        w = fit_class_weights(pool, labels, epochs=0)
        np.testing.assert_array_equal(w, np.full(4, 0.25))
        for sample in pool:
            assert class_weighted(sample, w) == logit_average(sample)

    def test_same_seed_identical(self):
        pool, labels = self.informative_pool()
        a = fit_class_weights(pool, labels, epochs=20, seed=3)
        b = fit_class_weights(pool, labels, epochs=20, seed=3)
        np.testing.assert_array_equal(a, b)

    def test_identical_positions_agree_with_average(self):
        rng = np.random.default_rng(5)
        base = rng.normal(size=(40, 1, 3))
        pool = np.repeat(base, 5, axis=1)
        # a calibration model that beats chance: 80% of labels follow the argmax
        labels = np.where(rng.random(40) < 0.8, np.argmax(base[:, 0], axis=1), rng.integers(0, 3, size=40))
        w = fit_class_weights(pool, labels, epochs=50)
        assert w.sum() > 0
        for sample in pool:
            assert class_weighted(sample, w) == logit_average(sample)

    def test_ragged_pool(self):
        with pytest.raises(InvalidInputError):
            fit_class_weights([np.zeros((2, 2)), np.zeros((3, 2))], [0, 1])

    @pytest.mark.parametrize("labels", [[0], [0, 2], [-1, 0]])
    def test_bad_labels(self, labels):
        with pytest.raises(InvalidInputError):
            fit_class_weights(np.zeros((2, 3, 2)), labels)

    def test_empty_pool(self):
        with pytest.raises(InvalidInputError):
            fit_class_weights(np.zeros((0, 3, 2)), [])


class TestPredictTta:
    def setup_method(self):
        self.vocab, self.params = toy_model()
        self.augs = toy_augmenters()
        self.words = ["i", "do", "not", "like", "the", "bad", "car"]

    @pytest.mark.parametrize("method", [HARD_VOTE, SOFT_VOTE, LOGIT_AVERAGE, CLASS_WEIGHTED])
    def test_identity_augmenter_gives_base(self, method):
        base = int(np.argmax(forward(self.params, self.vocab.encode(self.words))))
        got = predict_tta(self.params, self.words, method, AugmenterSet.identity(), 6, Rng(0), self.vocab,
                          weights=np.linspace(0.1, 1.0, 6))
        assert got == base

    def test_golden(self):
        assert json.loads((DATA / "golden_tta.json").read_text()) == tta_golden()

    def test_does_not_mutate_params(self):
        before = [a.copy() for a in self.params.arrays()]
        for method in (HARD_VOTE, SOFT_VOTE, LOGIT_AVERAGE):
            predict_tta(self.params, self.words, method, self.augs, 10, Rng(1), self.vocab)
        for a, b in zip(before, self.params.arrays()):
            np.testing.assert_array_equal(a, b)

    def test_hard_and_soft_agree_on_unanimous_argmax(self):
        for seed in range(40):
            logits = augmentation_logits(self.params, self.words, self.augs, 8, Rng(seed), self.vocab)
            tops = set(np.argmax(logits, axis=1).tolist())
            if len(tops) == 1:
                assert aggregate(HARD_VOTE, logits) == aggregate(SOFT_VOTE, logits) == tops.pop()

    def test_zero_augmentations(self):
        with pytest.raises(InvalidInputError):
            predict_tta(self.params, self.words, HARD_VOTE, self.augs, 0, Rng(0), self.vocab)

    def test_methods_listed(self):
        assert baselines.METHODS == (HARD_VOTE, SOFT_VOTE, LOGIT_AVERAGE, CLASS_WEIGHTED)
