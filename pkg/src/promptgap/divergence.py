"""Answer divergence, consistency scoring and prompt classification.

Divergence is the reverse KL (student || teacher) over Laplace-smoothed
empirical answer distributions, in nats. Smoothing adds a pseudocount of 1 to
every label in the union support, which guarantees full support and a finite
divergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .answers import AnswerDistribution
from .errors import EmptyDistribution, EmptyPool

ZERO_DELTA_EPSILON = 1e-12


@dataclass
class Thresholds:
    epsilon: float = ZERO_DELTA_EPSILON
    easy_floor: float = 1.0
    hard_ceiling: float = 0.5


@dataclass
class DivergenceRecord:
    """Divergence and consistency measurements for one prompt."""

    prompt_id: str
    delta: float
    teacher_consistency: float
    student_consistency: float
    classification: str  # "zero_delta" | "delta"
    consistency_class: str  # "easy" | "normal" | "hard"

    def to_json_dict(self) -> Dict[str, object]:
        return {
            "prompt_id": self.prompt_id,
            "delta": self.delta,
            "teacher_consistency": self.teacher_consistency,
            "student_consistency": self.student_consistency,
            "classification": self.classification,
            "consistency_class": self.consistency_class,
        }

    @classmethod
    def from_json_dict(cls, row: Dict[str, object]) -> "DivergenceRecord":
        return cls(
            prompt_id=str(row["prompt_id"]),
            delta=float(row["delta"]),
            teacher_consistency=float(row["teacher_consistency"]),
            student_consistency=float(row["student_consistency"]),
            classification=str(row["classification"]),
            consistency_class=str(row["consistency_class"]),
        )


def laplace_smooth(
    student_dist: AnswerDistribution,
    teacher_dist: AnswerDistribution,
    include_unextracted: bool = True,
) -> Tuple[List[str], np.ndarray, np.ndarray]:
    """Smooth both distributions over their union support with pseudocount 1.

    Returns (support labels, student probabilities, teacher probabilities).
    Each probability is (count + 1) / (total + |support|).
    """
    s_counts = student_dist.effective_counts(include_unextracted)
    t_counts = teacher_dist.effective_counts(include_unextracted)
    s_total = sum(s_counts.values())
    t_total = sum(t_counts.values())
    if s_total == 0 or t_total == 0:
        raise EmptyDistribution("both distributions must have total > 0")
    support = sorted(set(s_counts) | set(t_counts))
    m = len(support)
    s_probs = np.array([(s_counts.get(a, 0) + 1) / (s_total + m) for a in support])
    t_probs = np.array([(t_counts.get(a, 0) + 1) / (t_total + m) for a in support])
    return support, s_probs, t_probs


def answer_divergence(
    student_dist: AnswerDistribution,
    teacher_dist: AnswerDistribution,
    include_unextracted: bool = True,
) -> float:
    """Reverse KL (student || teacher) over smoothed vectors, in nats."""
    _, p_student, p_teacher = laplace_smooth(
        student_dist, teacher_dist, include_unextracted
    )
    return float(np.sum(p_student * np.log(p_student / p_teacher)))


def consistency(
    dist: AnswerDistribution, include_unextracted: bool = True
) -> float:
    """Modal group share of the rollouts: max count / total."""
    counts = dist.effective_counts(include_unextracted)
    total = sum(counts.values())
    if total == 0:
        raise EmptyDistribution("consistency requires total > 0")
    return max(counts.values()) / total


def classify(
    prompt_id: str,
    delta: float,
    teacher_consistency: float,
    student_consistency: float,
    thresholds: Thresholds = Thresholds(),
) -> DivergenceRecord:
    """Classify a prompt as zero-delta/delta and easy/normal/hard."""
    classification = "zero_delta" if delta < thresholds.epsilon else "delta"
    if teacher_consistency >= thresholds.easy_floor:
        consistency_class = "easy"
    elif teacher_consistency < thresholds.hard_ceiling:
        consistency_class = "hard"
    else:
        consistency_class = "normal"
    return DivergenceRecord(
        prompt_id=prompt_id,
        delta=delta,
        teacher_consistency=teacher_consistency,
        student_consistency=student_consistency,
        classification=classification,
        consistency_class=consistency_class,
    )


def measure(
    prompt_id: str,
    teacher_dist: AnswerDistribution,
    student_dist: AnswerDistribution,
    thresholds: Thresholds = Thresholds(),
    include_unextracted: bool = True,
) -> DivergenceRecord:
    """Compute delta and consistencies for one prompt and classify it."""
    delta = answer_divergence(student_dist, teacher_dist, include_unextracted)
    return classify(
        prompt_id,
        delta,
        consistency(teacher_dist, include_unextracted),
        consistency(student_dist, include_unextracted),
        thresholds,
    )


@dataclass
class PoolStatistics:
    mean: float
    median: float
    variance: float
    zero_delta_fraction: float
    histogram: List[Tuple[float, float, int]] = field(default_factory=list)
    count: int = 0

    def render(self, width: int = 40) -> str:
        """ASCII bar table of the delta histogram (zero bin first)."""
        lines = [
            f"prompts: {self.count}",
            f"delta mean: {self.mean:.4f}  median: {self.median:.4f}  "
            f"variance: {self.variance:.4f}",
            f"zero-delta fraction: {self.zero_delta_fraction:.2%}",
            "",
        ]
        peak = max((c for _, _, c in self.histogram), default=0) or 1
        for lo, hi, count in self.histogram:
            label = "delta = 0" if lo == hi == 0.0 else f"({lo:.1f}, {hi:.1f}]"
            bar = "#" * round(width * count / peak)
            lines.append(f"{label:>12}  {count:>6}  {bar}")
        return "\n".join(lines)


def pool_statistics(
    records: Sequence[DivergenceRecord],
    bin_width: float = 0.1,
    epsilon: float = ZERO_DELTA_EPSILON,
) -> PoolStatistics:
    """Population statistics of delta over a record pool.

    The histogram has a dedicated zero bin plus uniform-width bins covering
    (0, max delta].
    """
    if not records:
        raise EmptyPool("pool_statistics requires a non-empty record list")
    deltas = np.array([r.delta for r in records], dtype=float)
    zero_mask = deltas < epsilon
    histogram: List[Tuple[float, float, int]] = [(0.0, 0.0, int(zero_mask.sum()))]
    positive = deltas[~zero_mask]
    if positive.size:
        n_bins = int(np.ceil(positive.max() / bin_width))
        for b in range(n_bins):
            lo, hi = b * bin_width, (b + 1) * bin_width
            count = int(np.sum((positive > lo) & (positive <= hi)))
            histogram.append((lo, hi, count))
    return PoolStatistics(
        mean=float(deltas.mean()),
        median=float(np.median(deltas)),
        variance=float(deltas.var()),
        zero_delta_fraction=float(zero_mask.mean()),
        histogram=histogram,
        count=len(records),
    )
