import json

import pytest
from hypothesis import given, strategies as st

from promptgap.answers import (
    NO_ANSWER_LABEL,
    AnswerDistribution,
    PromptRecord,
    Rollout,
    RolloutSet,
    build_distributions,
    canonicalize_answer,
    extract_answer,
    group_answers_exact,
    group_answers_judge,
    judge_group_indices,
    render_grouping_prompt,
)
from promptgap.errors import JudgeUnavailable


class TestExtractAnswer:
    def test_plain_marker(self):
        assert extract_answer("...so the total is 42.\nFinal Answer: 42") == "42"

    def test_no_marker(self):
        assert extract_answer("I cannot determine this.") is None

    def test_markdown_marker_without_colon(self):
        assert extract_answer("**Final Answer** 512.") == "512"

    def test_case_insensitive(self):
        assert extract_answer("final answer: blue") == "blue"

    def test_last_marker_wins(self):
        text = "Final Answer: 1\nWait, let me redo this.\nFinal Answer: 2"
        assert extract_answer(text) == "2"

    def test_empty_remainder(self):
        assert extract_answer("Final Answer:") is None
        assert extract_answer("Final Answer:   .") is None

    def test_multiline_answer_keeps_rest(self):
        assert extract_answer("Final Answer: x = 3") == "x = 3"

    @given(st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=40))
    def test_idempotent_through_marker(self, text):
        answer = extract_answer("Final Answer: " + text)
        if answer is not None:
            assert extract_answer("Final Answer: " + answer) == answer


class TestCanonicalize:
    def test_thousands_separator(self):
        assert canonicalize_answer("1,000") == canonicalize_answer("1000")

    def test_trailing_decimal_zeros(self):
        assert canonicalize_answer("5.0") == "5"
        assert canonicalize_answer("5.10") == "5.1"

    def test_case_and_whitespace(self):
        assert canonicalize_answer("  The   Answer ") == "the answer"

    def test_markdown_and_period(self):
        assert canonicalize_answer("**512.**") == "512"


class TestGroupExact:
    def test_basic_counts(self):
        dist = group_answers_exact(["4", "4", "5"])
        assert dist.groups == {"4": 2, "5": 1}
        assert dist.total == 3

    def test_numeric_normalization(self):
        dist = group_answers_exact(["1,000", "1000"])
        assert dist.groups == {"1000": 2}

    def test_empty(self):
        dist = group_answers_exact([])
        assert dist.groups == {} and dist.total == 0

    def test_none_counts_unextracted(self):
        dist = group_answers_exact(["a", None, None])
        assert dist.unextracted == 2
        assert dist.effective_counts() == {"a": 1, NO_ANSWER_LABEL: 2}

    @given(st.lists(st.sampled_from(["a", "b", "7", "seven", None]), max_size=20))
    def test_permutation_invariant(self, answers):
        dist = group_answers_exact(answers)
        rotated = group_answers_exact(answers[::-1])
        assert dist.groups == rotated.groups
        assert dist.unextracted == rotated.unextracted


def scripted_judge(response):
    return lambda prompt, attempt: response


class TestGroupJudge:
    # Inputs mirror the grouping-template example; the expected partition is
    # the hand-applied semantic-equivalence grouping.
    EXAMPLE = [
        "512", "484", "The final result is 484.", "512",
        "None", "29", "**Final Answer** 512.", "484",
    ]

    def test_semantic_grouping(self):
        response = json.dumps(
            {"512": [1, 4, 7], "484": [2, 3, 8], "29": [6], "None": [5]}
        )
        groups, fallback = judge_group_indices("q", self.EXAMPLE, scripted_judge(response))
        assert not fallback
        assert groups == {"512": [1, 4, 7], "484": [2, 3, 8], "29": [6], "None": [5]}

    def test_identical_strings(self):
        dist = group_answers_judge("q", ["A", "A"], scripted_judge('{"A": [1, 2]}'))
        assert dist.groups == {"A": 2}
        assert not dist.judge_fallback

    def test_non_partition_falls_back(self):
        # Omits index 3: retried, then exact fallback with the flag set.
        calls = []

        def judge(prompt, attempt):
            calls.append(attempt)
            return '{"a": [1, 2]}'

        dist = group_answers_judge("q", ["x", "x", "y"], judge)
        assert dist.judge_fallback
        assert dist.groups == {"x": 2, "y": 1}
        assert len(calls) == 3  # initial try + 2 retries

    def test_recovers_on_retry(self):
        responses = iter(["garbage", '{"x": [1, 2]}'])

        def judge(prompt, attempt):
            return next(responses)

        dist = group_answers_judge("q", ["x", "x"], judge)
        assert dist.groups == {"x": 2} and not dist.judge_fallback

    def test_transport_error_raises(self):
        def judge(prompt, attempt):
            raise RuntimeError("connection refused")

        with pytest.raises(JudgeUnavailable):
            group_answers_judge("q", ["x"], judge)

    def test_template_indexes_from_one(self):
        prompt = render_grouping_prompt("the question", ["a", "b"])
        assert "Student 1: a" in prompt
        assert "Student 2: b" in prompt
        assert "the question" in prompt


def make_rollouts(prompt_id, role, answers):
    rollouts = [
        Rollout(raw_text=f"... Final Answer: {a}" if a else "no idea",
                extracted_answer=a)
        for a in answers
    ]
    return RolloutSet(prompt_id=prompt_id, role=role, rollouts=rollouts)


class TestBuildDistributions:
    def prompt(self):
        return PromptRecord(id="p1", text="q?")

    def test_unanimous(self):
        t = make_rollouts("p1", "teacher", ["7"] * 16)
        s = make_rollouts("p1", "student", ["7"] * 16)
        td, sd = build_distributions(self.prompt(), t, s)
        assert td.groups == {"7": 16} and sd.groups == {"7": 16}

    def test_counting(self):
        t = make_rollouts("p1", "teacher", ["A"] * 8 + ["B"] * 8)
        s = make_rollouts("p1", "student", ["A"] * 16)
        td, sd = build_distributions(self.prompt(), t, s)
        assert td.groups == {"a": 8, "b": 8}
        assert sd.groups == {"a": 16}
        assert td.total == sd.total == 16

    def test_joint_judge_grouping_shares_labels(self):
        t = make_rollouts("p1", "teacher", ["seven"] * 4)
        s = make_rollouts("p1", "student", ["7"] * 4)

        def judge(prompt, attempt):
            return '{"7": [1, 2, 3, 4, 5, 6, 7, 8]}'

        td, sd = build_distributions(self.prompt(), t, s, "judge", judge=judge)
        assert td.groups == {"7": 4} and sd.groups == {"7": 4}

    def test_mismatched_prompt_id_rejected(self):
        t = make_rollouts("other", "teacher", ["7"])
        s = make_rollouts("p1", "student", ["7"])
        with pytest.raises(ValueError):
            build_distributions(self.prompt(), t, s)

    def test_totals_match_k_with_unextracted(self):
        t = make_rollouts("p1", "teacher", ["A", None, None, "B"])
        s = make_rollouts("p1", "student", [None] * 4)
        td, sd = build_distributions(self.prompt(), t, s)
        assert td.total == 4 and sd.total == 4
        assert sd.effective_counts() == {NO_ANSWER_LABEL: 4}


class TestRecordInvariants:
    def test_empty_text_rejected(self):
        with pytest.raises(ValueError):
            PromptRecord(id="x", text="")

    def test_skills_required_iff_skill_stage(self):
        with pytest.raises(ValueError):
            PromptRecord(id="x", text="q", stage="skill_generated")
        with pytest.raises(ValueError):
            PromptRecord(id="x", text="q", stage="existing", skills_used=["s"])

    def test_no_answer_label_reserved(self):
        with pytest.raises(ValueError):
            AnswerDistribution(groups={NO_ANSWER_LABEL: 1})
