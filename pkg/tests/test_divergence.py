import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from promptgap.answers import AnswerDistribution
from promptgap.divergence import (
    DivergenceRecord,
    Thresholds,
    answer_divergence,
    classify,
    consistency,
    laplace_smooth,
    measure,
    pool_statistics,
)
from promptgap.errors import EmptyDistribution, EmptyPool


def dist(groups, unextracted=0):
    return AnswerDistribution(groups=dict(groups), unextracted=unextracted)


def kl_oracle(student_counts, teacher_counts):
    """Exact-rational smoothing, float log at the very end."""
    support = sorted(set(student_counts) | set(teacher_counts))
    m = len(support)
    s_total = sum(student_counts.values())
    t_total = sum(teacher_counts.values())
    total = 0.0
    for a in support:
        p = Fraction(student_counts.get(a, 0) + 1, s_total + m)
        q = Fraction(teacher_counts.get(a, 0) + 1, t_total + m)
        total += float(p) * math.log(float(p) / float(q))
    return total


class TestLaplaceSmooth:
    def test_union_support_formula(self):
        support, s, t = laplace_smooth(dist({"A": 16}), dist({"A": 8, "B": 8}))
        assert support == ["A", "B"]
        assert np.allclose(s, [17 / 18, 1 / 18])
        assert np.allclose(t, [9 / 18, 9 / 18])

    def test_identical_inputs_identical_vectors(self):
        _, s, t = laplace_smooth(dist({"x": 3, "y": 1}), dist({"x": 3, "y": 1}))
        assert np.array_equal(s, t)

    def test_singletons(self):
        _, s, t = laplace_smooth(dist({"A": 1}), dist({"B": 1}))
        assert np.allclose(s, [2 / 3, 1 / 3])
        assert np.allclose(t, [1 / 3, 2 / 3])

    def test_sums_to_one(self):
        _, s, t = laplace_smooth(dist({"A": 5, "B": 2}), dist({"C": 7}))
        assert abs(s.sum() - 1) < 1e-12
        assert abs(t.sum() - 1) < 1e-12

    def test_empty_raises(self):
        with pytest.raises(EmptyDistribution):
            laplace_smooth(dist({}), dist({"A": 1}))

    def test_unextracted_participates(self):
        support, _, _ = laplace_smooth(dist({"A": 1}, unextracted=2), dist({"A": 3}))
        assert len(support) == 2


class TestAnswerDivergence:
    def test_identical_is_zero(self):
        assert answer_divergence(dist({"A": 8, "B": 8}), dist({"A": 8, "B": 8})) == 0.0

    def test_known_value(self):
        # (17/18) ln(17/9) + (1/18) ln(1/9), frozen from the rational oracle.
        delta = answer_divergence(dist({"A": 16}), dist({"A": 8, "B": 8}))
        assert delta == pytest.approx(0.47858802538, abs=1e-9)
        assert delta == pytest.approx(kl_oracle({"A": 16}, {"A": 8, "B": 8}), abs=1e-12)

    def test_asymmetry(self):
        forward = answer_divergence(dist({"A": 16}), dist({"A": 8, "B": 8}))
        reverse = answer_divergence(dist({"A": 8, "B": 8}), dist({"A": 16}))
        assert reverse > 0 and reverse != pytest.approx(forward)

    count_maps = st.dictionaries(
        st.sampled_from("abcdef"), st.integers(min_value=1, max_value=32),
        min_size=1, max_size=6,
    )

    @given(count_maps, count_maps)
    def test_non_negative(self, s_counts, t_counts):
        assert answer_divergence(dist(s_counts), dist(t_counts)) >= 0.0

    @given(count_maps, count_maps)
    def test_label_permutation_invariance(self, s_counts, t_counts):
        mapping = {c: c.upper() * 2 for c in "abcdef"}
        renamed_s = {mapping[k]: v for k, v in s_counts.items()}
        renamed_t = {mapping[k]: v for k, v in t_counts.items()}
        original = answer_divergence(dist(s_counts), dist(t_counts))
        renamed = answer_divergence(dist(renamed_s), dist(renamed_t))
        assert renamed == pytest.approx(original, abs=1e-12)

    @given(count_maps, count_maps)
    def test_matches_oracle(self, s_counts, t_counts):
        delta = answer_divergence(dist(s_counts), dist(t_counts))
        assert delta == pytest.approx(kl_oracle(s_counts, t_counts), abs=1e-9)


class TestConsistency:
    def test_unanimous(self):
        assert consistency(dist({"A": 16})) == 1.0

    def test_even_split(self):
        assert consistency(dist({"A": 8, "B": 8})) == 0.5

    def test_three_way(self):
        assert consistency(dist({"A": 7, "B": 5, "C": 4})) == 0.4375

    def test_no_answer_counts_as_group(self):
        assert consistency(dist({"A": 4}, unextracted=12)) == 0.75

    def test_empty_raises(self):
        with pytest.raises(EmptyDistribution):
            consistency(dist({}))

    @given(st.dictionaries(st.sampled_from("abc"), st.integers(1, 16), min_size=1))
    def test_invariant_to_renaming(self, counts):
        renamed = {k * 3: v for k, v in counts.items()}
        assert consistency(dist(counts)) == consistency(dist(renamed))


class TestClassify:
    def test_zero_delta_easy(self):
        r = classify("p", 0.0, 1.0, 1.0)
        assert r.classification == "zero_delta" and r.consistency_class == "easy"

    def test_delta_normal(self):
        r = classify("p", 0.41, 0.5625, 0.5)
        assert r.classification == "delta" and r.consistency_class == "normal"

    def test_delta_hard(self):
        r = classify("p", 0.3, 0.4375, 0.2)
        assert r.classification == "delta" and r.consistency_class == "hard"

    def test_floor_is_inclusive(self):
        assert classify("p", 0.1, 0.5, 0.5).consistency_class == "normal"

    def test_epsilon_boundary(self):
        assert classify("p", 1e-13, 0.9, 0.9).classification == "zero_delta"
        assert classify("p", 1e-11, 0.9, 0.9).classification == "delta"


class TestMeasure:
    def test_end_to_end(self):
        r = measure("p", dist({"A": 8, "B": 8}), dist({"A": 16}))
        assert r.delta == pytest.approx(0.47858802538, abs=1e-9)
        assert r.teacher_consistency == 0.5
        assert r.student_consistency == 1.0
        assert r.classification == "delta"

    def test_zero_delta_equal_counts(self):
        r = measure("p", dist({"A": 10, "B": 6}), dist({"A": 10, "B": 6}))
        assert r.classification == "zero_delta"

    def test_include_unextracted_switch(self):
        teacher = dist({"A": 8}, unextracted=8)
        student = dist({"A": 8}, unextracted=8)
        with_na = measure("p", teacher, student, include_unextracted=True)
        assert with_na.delta == 0.0
        without = measure("p", teacher, student, include_unextracted=False)
        assert without.delta == 0.0


def record(delta, tc=1.0):
    return classify("p", delta, tc, tc)


class TestPoolStatistics:
    def test_fraction_and_mean(self):
        stats = pool_statistics([record(0), record(0), record(0), record(0.4)])
        assert stats.zero_delta_fraction == 0.75
        assert stats.mean == pytest.approx(0.1)

    def test_all_zero(self):
        stats = pool_statistics([record(0)] * 5)
        assert stats.mean == 0 and stats.median == 0 and stats.variance == 0
        assert stats.zero_delta_fraction == 1.0

    def test_constructed_69_percent(self):
        records = [record(0)] * 69 + [record(0.5)] * 31
        assert pool_statistics(records).zero_delta_fraction == 0.69

    def test_population_variance(self):
        stats = pool_statistics([record(0.0), record(0.2)])
        assert stats.variance == pytest.approx(0.01)

    def test_histogram_zero_bin(self):
        stats = pool_statistics([record(0), record(0.05), record(0.15)])
        assert stats.histogram[0] == (0.0, 0.0, 1)
        assert stats.histogram[1][2] == 1  # (0, 0.1]
        assert stats.histogram[2][2] == 1  # (0.1, 0.2]

    def test_empty_raises(self):
        with pytest.raises(EmptyPool):
            pool_statistics([])

    def test_render_mentions_fraction(self):
        text = pool_statistics([record(0), record(0.3)]).render()
        assert "zero-delta fraction: 50.00%" in text


class TestRecordRoundTrip:
    def test_json_round_trip(self):
        r = measure("p9", dist({"A": 3, "B": 1}), dist({"B": 4}))
        assert DivergenceRecord.from_json_dict(r.to_json_dict()) == r
