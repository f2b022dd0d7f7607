"""Prompts, rollouts, answer extraction and answer-distribution construction.

A model response is reduced to a canonical final answer, and the answers from
K rollouts are grouped (exactly or via an LLM judge) into an empirical
distribution over answer labels. Rollouts without a parseable answer are
tracked separately and can participate in downstream divergence under the
reserved ``NO_ANSWER_LABEL``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .errors import JudgeUnavailable
from .templates import JUDGE_GROUPING_TEMPLATE

NO_ANSWER_LABEL = "__NO_ANSWER__"

STAGES = ("existing", "seed_generated", "skill_generated")
ROLES = ("teacher", "student", "generator", "judge", "embedder")


@dataclass
class PromptRecord:
    """One reasoning prompt with image references and pipeline lineage."""

    id: str
    text: str
    image_refs: List[str] = field(default_factory=list)
    source: str = ""
    stage: str = "existing"
    skills_used: Optional[List[str]] = None
    extras: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"prompt {self.id!r}: text must be non-empty")
        if self.stage not in STAGES:
            raise ValueError(f"prompt {self.id!r}: unknown stage {self.stage!r}")
        if (self.skills_used is not None) != (self.stage == "skill_generated"):
            raise ValueError(
                f"prompt {self.id!r}: skills_used must be present iff stage is skill_generated"
            )


@dataclass
class Rollout:
    raw_text: str
    extracted_answer: Optional[str] = None


@dataclass
class RolloutSet:
    """K sampled responses from one model role for one prompt."""

    prompt_id: str
    role: str
    rollouts: List[Rollout]

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")

    @property
    def k(self) -> int:
        return len(self.rollouts)

    def answers(self) -> List[Optional[str]]:
        return [r.extracted_answer for r in self.rollouts]


@dataclass
class AnswerDistribution:
    """Counts of canonical answer labels over a set of rollouts.

    ``groups`` holds extracted answers only; rollouts with no parseable answer
    are counted in ``unextracted`` and surface as ``NO_ANSWER_LABEL`` through
    :meth:`effective_counts`.
    """

    groups: Dict[str, int] = field(default_factory=dict)
    unextracted: int = 0
    judge_fallback: bool = False

    def __post_init__(self):
        for label, count in self.groups.items():
            if count < 1:
                raise ValueError(f"label {label!r} has non-positive count {count}")
        if NO_ANSWER_LABEL in self.groups:
            raise ValueError(f"{NO_ANSWER_LABEL} must be counted via `unextracted`")

    @property
    def total(self) -> int:
        return sum(self.groups.values()) + self.unextracted

    def effective_counts(self, include_unextracted: bool = True) -> Dict[str, int]:
        counts = dict(self.groups)
        if include_unextracted and self.unextracted > 0:
            counts[NO_ANSWER_LABEL] = self.unextracted
        return counts


_ANSWER_MARKER = re.compile(r"[*_]{0,3}\s*final answer\s*[*_]{0,3}\s*:?", re.IGNORECASE)
_TRAILING_PUNCT = ".,;:!?"
_THOUSANDS = re.compile(r"^[+-]?\d{1,3}(?:,\d{3})+(?:\.\d+)?$")
_NUMBER = re.compile(r"^[+-]?\d+(?:\.\d+)?$")


def extract_answer(raw_text: str) -> Optional[str]:
    """Return the text after the final ``Final Answer:`` marker, or None.

    The remainder is trimmed of whitespace, surrounding markdown emphasis and
    trailing punctuation. Absence of a marker (or an empty remainder) is a
    value, not an error.
    """
    last = None
    for m in _ANSWER_MARKER.finditer(raw_text):
        last = m
    if last is None:
        return None
    remainder = raw_text[last.end():].strip()
    remainder = remainder.strip("*_`").strip()
    remainder = remainder.rstrip(_TRAILING_PUNCT).strip()
    return remainder or None


def canonicalize_answer(answer: str) -> str:
    """Normalize an answer string for exact-match grouping.

    Order: strip markdown emphasis, strip trailing punctuation, collapse
    whitespace, lowercase, then numeric normalization (drop thousands
    separators and insignificant trailing decimal zeros).
    """
    s = answer.strip().strip("*_`")
    s = s.rstrip(_TRAILING_PUNCT)
    s = re.sub(r"\s+", " ", s).strip().lower()
    if _THOUSANDS.match(s):
        s = s.replace(",", "")
    if _NUMBER.match(s) and "." in s:
        s = s.rstrip("0").rstrip(".")
    return s


def group_answers_exact(answers: Sequence[Optional[str]]) -> AnswerDistribution:
    """Group answers by canonical string equality. None counts as unextracted."""
    groups: Dict[str, int] = {}
    unextracted = 0
    for answer in answers:
        if answer is None:
            unextracted += 1
            continue
        label = canonicalize_answer(answer)
        if not label:
            unextracted += 1
            continue
        groups[label] = groups.get(label, 0) + 1
    return AnswerDistribution(groups=groups, unextracted=unextracted)


JudgeFn = Callable[[str, int], str]
"""Judge call: (rendered prompt, attempt index) -> raw judge response."""


def render_grouping_prompt(question: str, answers: Sequence[str]) -> str:
    answers_str = "\n".join(
        f"Student {i}: {answer}" for i, answer in enumerate(answers, start=1)
    )
    return JUDGE_GROUPING_TEMPLATE.format(question=question, answers_str=answers_str)


def _parse_grouping_response(response: str, n: int) -> Dict[str, List[int]]:
    """Parse the judge's JSON grouping and check it partitions 1..n."""
    start = response.find("{")
    end = response.rfind("}")
    if start < 0 or end <= start:
        raise ValueError("no JSON object in judge response")
    blob = response[start:end + 1]
    blob = re.sub(r",\s*}", "}", blob)
    parsed = json.loads(blob)
    if not isinstance(parsed, dict):
        raise ValueError("judge response is not an object")
    groups: Dict[str, List[int]] = {}
    seen: set = set()
    for label, indices in parsed.items():
        if not isinstance(indices, list) or not indices:
            raise ValueError(f"group {label!r} has no index list")
        idx = [int(i) for i in indices]
        for i in idx:
            if i < 1 or i > n:
                raise ValueError(f"index {i} out of range 1..{n}")
            if i in seen:
                raise ValueError(f"index {i} appears in more than one group")
            seen.add(i)
        groups[str(label)] = idx
    if len(seen) != n:
        missing = sorted(set(range(1, n + 1)) - seen)
        raise ValueError(f"grouping is not a partition; missing indices {missing}")
    return groups


def judge_group_indices(
    question: str,
    answers: Sequence[str],
    judge: JudgeFn,
    max_retries: int = 2,
) -> Tuple[Dict[str, List[int]], bool]:
    """Group answers by index via the judge; fall back to exact grouping.

    Returns (label -> 1-based indices, fallback_flag). Judge transport errors
    propagate as JudgeUnavailable; malformed groupings are retried
    ``max_retries`` times, then the exact-match grouping is used and flagged.
    """
    if not answers:
        return {}, False
    prompt = render_grouping_prompt(question, answers)
    for attempt in range(max_retries + 1):
        try:
            response = judge(prompt, attempt)
        except JudgeUnavailable:
            raise
        except Exception as exc:  # transport-level failure from the handle
            raise JudgeUnavailable(str(exc)) from exc
        try:
            return _parse_grouping_response(response, len(answers)), False
        except (ValueError, json.JSONDecodeError):
            continue
    # Exact grouping as last resort, flagged for the caller.
    fallback: Dict[str, List[int]] = {}
    for i, answer in enumerate(answers, start=1):
        label = canonicalize_answer(answer) or answer
        fallback.setdefault(label, []).append(i)
    return fallback, True


def group_answers_judge(
    question: str,
    answers: Sequence[str],
    judge: JudgeFn,
    max_retries: int = 2,
) -> AnswerDistribution:
    """Judge-based semantic grouping of extracted answers into a distribution."""
    groups, fallback = judge_group_indices(question, answers, judge, max_retries)
    return AnswerDistribution(
        groups={label: len(idx) for label, idx in groups.items()},
        unextracted=0,
        judge_fallback=fallback,
    )


def build_distributions(
    prompt: PromptRecord,
    teacher_rollouts: RolloutSet,
    student_rollouts: RolloutSet,
    grouping_mode: str = "exact",
    judge: Optional[JudgeFn] = None,
    max_retries: int = 2,
) -> Tuple[AnswerDistribution, AnswerDistribution]:
    """Build paired teacher/student answer distributions with joint grouping.

    Both rollout sets are grouped in a single call so identical answers across
    the two models receive the same canonical label.
    """
    for rollouts in (teacher_rollouts, student_rollouts):
        if rollouts.prompt_id != prompt.id:
            raise ValueError(
                f"rollout set for {rollouts.prompt_id!r} does not match prompt {prompt.id!r}"
            )

    if grouping_mode == "exact":
        teacher = group_answers_exact(teacher_rollouts.answers())
        student = group_answers_exact(student_rollouts.answers())
        return teacher, student
    if grouping_mode != "judge":
        raise ValueError(f"unknown grouping mode {grouping_mode!r}")
    if judge is None:
        raise ValueError("grouping_mode='judge' requires a judge handle")

    # Joint call over the concatenated extracted answers; unextracted rollouts
    # never reach the judge.
    combined: List[str] = []
    owner: List[int] = []  # 0 = teacher, 1 = student
    t_unextracted = 0
    s_unextracted = 0
    for answer in teacher_rollouts.answers():
        if answer is None:
            t_unextracted += 1
        else:
            combined.append(answer)
            owner.append(0)
    for answer in student_rollouts.answers():
        if answer is None:
            s_unextracted += 1
        else:
            combined.append(answer)
            owner.append(1)

    groups, fallback = judge_group_indices(prompt.text, combined, judge, max_retries)
    t_groups: Dict[str, int] = {}
    s_groups: Dict[str, int] = {}
    for label, indices in groups.items():
        for i in indices:
            side = t_groups if owner[i - 1] == 0 else s_groups
            side[label] = side.get(label, 0) + 1
    teacher = AnswerDistribution(t_groups, t_unextracted, judge_fallback=fallback)
    student = AnswerDistribution(s_groups, s_unextracted, judge_fallback=fallback)
    return teacher, student
