import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from memocl.errors import InvalidInputError
from memocl.metrics import (
    BASE,
    METHOD,
    GroupedPrediction,
    average_accuracy,
    ccr,
    evaluate,
    format_ccr,
    format_delta,
    mean_std,
    per_group_accuracy,
    worst_group_accuracy,
)

G = GroupedPrediction

pred_st = st.builds(
    G,
    st.integers(0, 2), st.integers(0, 2), st.integers(0, 2),
    st.lists(st.integers(0, 7), max_size=3).map(lambda gs: tuple(sorted(set(gs)))),
)


def random_log(rng: np.random.Generator, n: int):
    return [G(int(rng.integers(0, 3)), int(rng.integers(0, 3)), int(rng.integers(0, 3)),
              tuple(sorted(set(rng.integers(0, 8, size=int(rng.integers(0, 3))).tolist()))))
            for _ in range(n)]


def recount(log):
    """Independent plain-loop oracle for every metric."""
    n = len(log)
    hits = {BASE: 0, METHOD: 0}
    groups = {BASE: [[0, 0] for _ in range(8)], METHOD: [[0, 0] for _ in range(8)]}
    fixed = broken = 0
    for p in log:
        for which, guess in ((BASE, p.base_pred), (METHOD, p.method_pred)):
            ok = guess == p.true_label
            hits[which] += ok
            for g in p.groups:
                groups[which][g][0] += ok
                groups[which][g][1] += 1
        if p.base_pred != p.true_label and p.method_pred == p.true_label:
            fixed += 1
        if p.base_pred == p.true_label and p.method_pred != p.true_label:
            broken += 1
    out = {"n": n, "fixed": fixed, "broken": broken}
    for which in (BASE, METHOD):
        out[which] = hits[which] / n
        accs = [(c / t, g) for g, (c, t) in enumerate(groups[which]) if t]
        out[which + "_wga"] = min(accs) if accs else None
    return out


class TestAverageAccuracy:
    def test_all_correct(self):
        assert average_accuracy([G(1, 0, 1), G(0, 0, 0)]) == 1.0

    def test_mixed(self):
        log = [G(1, 1, 1), G(1, 1, 0), G(0, 0, 1), G(0, 1, 0)]
        assert average_accuracy(log, METHOD) == 0.5
        assert average_accuracy(log, BASE) == 0.75

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            average_accuracy([])

    def test_bad_selector(self):
        with pytest.raises(InvalidInputError):
            average_accuracy([G(0, 0, 0)], "oracle")


class TestWorstGroup:
    def test_single_group(self):
        assert worst_group_accuracy([G(0, 0, 0, (3,)), G(1, 1, 1, (3,))]) == (1.0, 3)

    def test_two_groups(self):
        log = [G(0, 0, 0, (0,))] * 9 + [G(0, 0, 1, (0,))]
        log += [G(0, 0, 0, (1,))] * 2 + [G(0, 0, 1, (1,))] * 3
        assert worst_group_accuracy(log) == (pytest.approx(0.4), 1)
        np.testing.assert_allclose(per_group_accuracy(log)[:2], [0.9, 0.4])

    def test_multi_membership_counts_in_both(self):
        log = [G(1, 1, 0, (2, 5)), G(1, 1, 1, (2,))]
        acc = per_group_accuracy(log)
        assert acc[2] == 0.5
        assert acc[5] == 0.0

    def test_tie_goes_to_smallest_group(self):
        log = [G(0, 0, 1, (4,)), G(0, 0, 1, (6,)), G(0, 0, 0, (1,))]
        assert worst_group_accuracy(log) == (0.0, 4)

    def test_empty_groups_excluded(self):
        acc = per_group_accuracy([G(0, 0, 0, (1,))])
        assert np.isnan(acc[0]) and acc[1] == 1.0

    def test_no_grouped_samples(self):
        with pytest.raises(InvalidInputError):
            worst_group_accuracy([G(0, 0, 0)])

    def test_group_out_of_range(self):
        with pytest.raises(InvalidInputError):
            per_group_accuracy([G(0, 0, 0, (8,))], num_groups=8)


class TestCcr:
    def test_no_change(self):
        assert ccr([G(0, 0, 0), G(1, 0, 0)]) == (0, 0, 1.0)

    def test_ratio_106_over_100(self):
        log = [G(1, 0, 1)] * 106 + [G(1, 1, 0)] * 100 + [G(0, 0, 0)] * 50
        assert ccr(log) == (106, 100, 1.06)

    def test_undefined_without_corruptions(self):
        assert ccr([G(1, 0, 1)] * 12) == (12, 0, None)

    def test_wrong_to_wrong_is_neither(self):
        assert ccr([G(0, 1, 2)]) == (0, 0, 1.0)

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            ccr([])


class TestOracle:
    def test_thousand_random_logs(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            log = random_log(rng, int(rng.integers(1, 40)))
            want = recount(log)
            assert average_accuracy(log, BASE) == want[BASE]
            assert average_accuracy(log, METHOD) == want[METHOD]
            fixed, broken, ratio = ccr(log)
            assert (fixed, broken) == (want["fixed"], want["broken"])
            if broken:
                assert ratio == want["fixed"] / want["broken"]
            for which in (BASE, METHOD):
                if want[which + "_wga"] is None:
                    with pytest.raises(InvalidInputError):
                        worst_group_accuracy(log, which)
                else:
                    assert worst_group_accuracy(log, which) == want[which + "_wga"]

    @given(st.lists(pred_st, min_size=1, max_size=30))
    def test_accuracy_delta_identity(self, log):
        fixed, broken, _ = ccr(log)
        delta = average_accuracy(log, METHOD) - average_accuracy(log, BASE)
        assert math.isclose(delta, (fixed - broken) / len(log), abs_tol=1e-12)

    @given(st.lists(pred_st, min_size=1, max_size=30), st.randoms(use_true_random=False))
    def test_order_invariance(self, log, rnd):
        shuffled = list(log)
        rnd.shuffle(shuffled)
        assert average_accuracy(shuffled) == average_accuracy(log)
        assert ccr(shuffled) == ccr(log)
        np.testing.assert_array_equal(per_group_accuracy(shuffled), per_group_accuracy(log))


class TestEvaluate:
    @given(st.lists(pred_st, min_size=1, max_size=30).filter(lambda log: any(p.groups for p in log)))
    def test_report_consistency(self, log):
        rep = evaluate(log)
        assert rep.n == len(log)
        unchanged_right = sum(p.base_pred == p.true_label == p.method_pred for p in log)
        unchanged_wrong = sum(p.base_pred != p.true_label and p.method_pred != p.true_label for p in log)
        assert rep.corrections + rep.corruptions + unchanged_right + unchanged_wrong == rep.n
        present = [a for a in rep.per_group_accuracy if not math.isnan(a)]
        assert rep.worst_group_accuracy == min(present)
        assert rep.worst_group_accuracy <= max(present)
        assert rep.per_group_accuracy[rep.worst_group_index] == rep.worst_group_accuracy


class TestSummaries:
    def test_mean_std_sample_deviation(self):
        mean, std = mean_std([1.0, 2.0, 3.0])
        assert mean == 2.0 and std == 1.0

    def test_single_value(self):
        assert mean_std([0.4]) == (0.4, 0.0)

    def test_empty(self):
        mean, std = mean_std([])
        assert math.isnan(mean) and math.isnan(std)

    @pytest.mark.parametrize("mean,std,text", [
        (2.9, 0.1, "+2.9 (.1)"),
        (-0.6, 0.4, "-0.6 (.4)"),
        (0.0, 0.0, "+0.0 (.0)"),
        (-0.01, 0.02, "+0.0 (.0)"),
        (12.34, 1.26, "+12.3 (1.3)"),
    ])
    def test_format_delta(self, mean, std, text):
        assert format_delta(mean, std) == text

    @pytest.mark.parametrize("mean,std,text", [
        (1.21, 0.11, "1.21 (.11)"),
        (1.06, 0.05, "1.06 (.05)"),
        (20.5, 3.456, "20.50 (3.46)"),
        (None, None, "undef"),
        (float("nan"), 0.0, "undef"),
    ])
    def test_format_ccr(self, mean, std, text):
        assert format_ccr(mean, std) == text
