"""Two-stage prompt synthesis: seed-guided and skill-guided generation.

Stage 1 turns (seed prompt, new image) pairs into fresh candidate problems and
keeps the ones the teacher answers consistently. Divergence is then measured
against the student, failure skills are extracted from disagreeing trajectory
pairs, and stage 2 generates further candidates conditioned on sampled skills.
A final rejection pass drops every zero-delta candidate.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .answers import (
    NO_ANSWER_LABEL,
    AnswerDistribution,
    PromptRecord,
    RolloutSet,
    build_distributions,
    canonicalize_answer,
    group_answers_exact,
    group_answers_judge,
)
from .dataset_io import dedup, list_images, write_dataset
from .divergence import (
    DivergenceRecord,
    Thresholds,
    consistency,
    measure,
    pool_statistics,
)
from .diversity import measure_e_vendi
from .errors import ConfigError, InsufficientSkills, ParseFailure
from .gateway import EndpointConfig, Gateway
from .templates import (
    ANSWER_FORMAT_INSTRUCTION,
    SEED_GENERATION_TEMPLATES,
    SKILL_EXTRACTION_TEMPLATE,
    SKILL_GENERATION_TEMPLATE,
)


@dataclass
class Skill:
    """A short failure-mode phrase extracted from a disagreeing trajectory pair."""

    phrase: str
    source_prompt_id: str
    teacher_answer: str
    student_answer: str

    def __post_init__(self):
        if not self.phrase or "\n" in self.phrase:
            raise ValueError("skill phrase must be non-empty and single-line")
        if self.teacher_answer == self.student_answer:
            raise ValueError("teacher and student answers must differ")


@dataclass
class PipelineConfig:
    seed_dataset_paths: List[str]
    image_source_paths: List[str]
    output_path: str
    run_dir: str
    holdout_image_paths: List[str] = field(default_factory=list)
    stages: Tuple[str, ...] = ("seed", "skill")
    n_fewshot: int = 1
    k_skills: int = 10
    k_rollouts: int = 16
    consistency_floor: float = 0.5
    n_stage1_candidates: int = 0
    n_stage2_candidates: int = 0
    grouping_mode: str = "exact"
    domain: str = "chart"
    dedup_threshold: int = 10
    include_unextracted: bool = True
    random_seed: int = 0
    endpoints: Dict[str, EndpointConfig] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_fewshot < 1:
            raise ConfigError("n_fewshot must be >= 1")
        if self.n_fewshot != 1:
            raise ConfigError("only n_fewshot=1 is supported")
        if self.k_skills < 1:
            raise ConfigError("k_skills must be >= 1")
        if not (0 < self.consistency_floor <= 1):
            raise ConfigError("consistency_floor must be in (0, 1]")
        if self.domain not in SEED_GENERATION_TEMPLATES:
            raise ConfigError(f"unknown domain {self.domain!r}")
        for stage in self.stages:
            if stage not in ("seed", "skill"):
                raise ConfigError(f"unknown stage {stage!r}")

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        endpoints = {
            role: EndpointConfig.from_json_dict(role, row)
            for role, row in raw.pop("endpoints", {}).items()
        }
        raw["stages"] = tuple(raw.get("stages", ("seed", "skill")))
        return cls(endpoints=endpoints, **raw)


_PROBLEM_MARKER = re.compile(r"final problem\s*:", re.IGNORECASE)


def parse_generated_problem(raw_text: str) -> Optional[str]:
    """Text after the final ``Final Problem:`` marker, or None."""
    last = None
    for m in _PROBLEM_MARKER.finditer(raw_text):
        last = m
    if last is None:
        return None
    problem = raw_text[last.end():].strip()
    return problem or None


def _generate(
    gateway: Gateway,
    rendered: str,
    image_refs: Sequence[str],
    max_retries: int,
) -> Optional[str]:
    for attempt in range(max_retries + 1):
        raw = gateway.complete_text(
            "generator", rendered, image_refs=image_refs, seed=attempt,
            tag=f"attempt={attempt}",
        )
        problem = parse_generated_problem(raw)
        if problem is not None:
            return problem
    return None


def seed_guided_generate(
    gateway: Gateway,
    seed: PromptRecord,
    new_image: str,
    candidate_id: str,
    domain: str = "chart",
    max_retries: int = 2,
) -> Optional[PromptRecord]:
    """Generate a stage-1 candidate from one seed pair and a new image.

    Returns None when the generator never emits the output marker; the caller
    counts the drop.
    """
    rendered = SEED_GENERATION_TEMPLATES[domain].format(reference_question=seed.text)
    seed_image = seed.image_refs[:1]
    problem = _generate(gateway, rendered, list(seed_image) + [new_image], max_retries)
    if problem is None:
        return None
    lineage = list(seed.extras.get("lineage", [])) + [seed.id]
    return PromptRecord(
        id=candidate_id,
        text=problem,
        image_refs=[new_image],
        source=f"seed_guided:{seed.id}",
        stage="seed_generated",
        extras={"lineage": lineage},
    )


def skill_guided_generate(
    gateway: Gateway,
    seed: PromptRecord,
    skills: Sequence[Skill],
    new_image: str,
    candidate_id: str,
    max_retries: int = 2,
) -> Optional[PromptRecord]:
    """Generate a stage-2 candidate conditioned on the sampled skill phrases."""
    skills_block = "\n".join(f"- {s.phrase}" for s in skills)
    rendered = SKILL_GENERATION_TEMPLATE.format(
        reference_question=seed.text, skills_block=skills_block
    )
    seed_image = seed.image_refs[:1]
    problem = _generate(gateway, rendered, list(seed_image) + [new_image], max_retries)
    if problem is None:
        return None
    lineage = list(seed.extras.get("lineage", [])) + [seed.id]
    return PromptRecord(
        id=candidate_id,
        text=problem,
        image_refs=[new_image],
        source=f"skill_guided:{seed.id}",
        stage="skill_generated",
        skills_used=[s.phrase for s in skills],
        extras={"lineage": lineage},
    )


@dataclass
class FilterDecision:
    keep: bool
    teacher_rollouts: RolloutSet
    teacher_dist: AnswerDistribution
    teacher_consistency: float


def consistency_filter(
    gateway: Gateway,
    candidate: PromptRecord,
    k_rollouts: int = 16,
    consistency_floor: float = 0.5,
    grouping_mode: str = "exact",
    judge=None,
    include_unextracted: bool = True,
    seed_base: int = 0,
) -> FilterDecision:
    """Keep a candidate iff the teacher answers it consistently.

    The teacher rollouts are returned for reuse by the rejection stage, so the
    teacher is sampled once per candidate across the whole pipeline.
    """
    rollouts = gateway.sample_rollouts(
        "teacher", candidate, k_rollouts, seed_base=seed_base,
        instruction=ANSWER_FORMAT_INSTRUCTION,
    )
    answers = rollouts.answers()
    if grouping_mode == "judge" and judge is not None:
        extracted = [a for a in answers if a is not None]
        dist = group_answers_judge(candidate.text, extracted, judge)
        dist.unextracted = len(answers) - len(extracted)
    else:
        dist = group_answers_exact(answers)
    score = consistency(dist, include_unextracted)
    return FilterDecision(
        keep=score >= consistency_floor,
        teacher_rollouts=rollouts,
        teacher_dist=dist,
        teacher_consistency=score,
    )


def _rollout_label(answer: Optional[str]) -> str:
    if answer is None:
        return NO_ANSWER_LABEL
    return canonicalize_answer(answer) or NO_ANSWER_LABEL


def select_disagreeing_pair(
    teacher_rollouts: RolloutSet, student_rollouts: RolloutSet
) -> Optional[Tuple[int, int, str, str]]:
    """Pick (teacher index, student index, teacher label, student label).

    Teacher labels are tried by descending count, and for each, the most
    common student label that differs. Returns None when every rollout on both
    sides carries the same label.
    """
    t_labels = [_rollout_label(a) for a in teacher_rollouts.answers()]
    s_labels = [_rollout_label(a) for a in student_rollouts.answers()]

    def by_count(labels: List[str]) -> List[str]:
        counts: Dict[str, int] = {}
        for lab in labels:
            counts[lab] = counts.get(lab, 0) + 1
        return sorted(counts, key=lambda lab: (-counts[lab], lab))

    for t_label in by_count(t_labels):
        for s_label in by_count(s_labels):
            if s_label != t_label:
                return (
                    t_labels.index(t_label),
                    s_labels.index(s_label),
                    t_label,
                    s_label,
                )
    return None


def extract_skill(
    gateway: Gateway,
    prompt: PromptRecord,
    teacher_rollouts: RolloutSet,
    student_rollouts: RolloutSet,
) -> Optional[Skill]:
    """Contrast a disagreeing trajectory pair into a single skill phrase."""
    pair = select_disagreeing_pair(teacher_rollouts, student_rollouts)
    if pair is None:
        return None
    t_idx, s_idx, t_label, s_label = pair
    rendered = SKILL_EXTRACTION_TEMPLATE.format(
        question=prompt.text,
        teacher_trajectory=teacher_rollouts.rollouts[t_idx].raw_text,
        student_trajectory=student_rollouts.rollouts[s_idx].raw_text,
    )
    response = gateway.complete_text("teacher", rendered, tag="skill-extraction")
    lines = [ln.strip().strip("*_`\"") for ln in response.splitlines() if ln.strip()]
    if not lines:
        return None
    return Skill(
        phrase=lines[-1],
        source_prompt_id=prompt.id,
        teacher_answer=t_label,
        student_answer=s_label,
    )


def sample_skills(
    pool: Sequence[Skill], k_skills: int, rng: np.random.Generator
) -> List[Skill]:
    if len(pool) < k_skills:
        raise InsufficientSkills(f"skill pool has {len(pool)} < k_skills={k_skills}")
    idx = rng.choice(len(pool), size=k_skills, replace=False)
    return [pool[i] for i in idx]


@dataclass
class Candidate:
    """A generated prompt with its cached teacher measurements."""

    record: PromptRecord
    decision: FilterDecision
    student_rollouts: Optional[RolloutSet] = None
    divergence: Optional[DivergenceRecord] = None


def measure_candidate(
    gateway: Gateway,
    candidate: Candidate,
    k_rollouts: int,
    grouping_mode: str = "exact",
    judge=None,
    include_unextracted: bool = True,
    thresholds: Thresholds = Thresholds(),
) -> Candidate:
    """Compute delta for a candidate, reusing its cached teacher rollouts."""
    candidate.student_rollouts = gateway.sample_rollouts(
        "student", candidate.record, k_rollouts,
        instruction=ANSWER_FORMAT_INSTRUCTION,
    )
    teacher_dist, student_dist = build_distributions(
        candidate.record,
        candidate.decision.teacher_rollouts,
        candidate.student_rollouts,
        grouping_mode=grouping_mode,
        judge=judge,
    )
    candidate.divergence = measure(
        candidate.record.id,
        teacher_dist,
        student_dist,
        thresholds,
        include_unextracted,
    )
    return candidate


def rejection_stage(
    candidates: Sequence[Candidate],
    epsilon: float = Thresholds().epsilon,
) -> Tuple[List[Candidate], float]:
    """Retain measured candidates with delta above epsilon; report the yield."""
    entered = [c for c in candidates if c.divergence is not None]
    retained = [c for c in entered if c.divergence.delta > epsilon]
    yield_value = len(retained) / len(entered) if entered else 0.0
    return retained, yield_value


@dataclass
class StageCounts:
    generated: int = 0
    parse_drops: int = 0
    consistency_kept: int = 0
    entered_rejection: int = 0
    retained: int = 0
    yield_value: float = 0.0


@dataclass
class RunReport:
    stage1: StageCounts
    stage2: StageCounts
    seeds_loaded: int = 0
    images_available: int = 0
    images_flagged: int = 0
    skills_extracted: int = 0
    retained_total: int = 0
    delta_mean: float = 0.0
    delta_median: float = 0.0
    delta_variance: float = 0.0
    zero_delta_fraction: float = 0.0
    e_vendi: Optional[float] = None
    histogram_text: str = ""

    def to_json_dict(self) -> Dict[str, object]:
        return asdict(self)

    def render(self) -> str:
        lines = [
            "synthesis run report",
            "====================",
            f"seeds loaded:        {self.seeds_loaded}",
            f"images available:    {self.images_available} "
            f"(flagged by dedup: {self.images_flagged})",
            "",
        ]
        for name, counts in (("stage 1 (seed-guided)", self.stage1),
                             ("stage 2 (skill-guided)", self.stage2)):
            lines += [
                name,
                f"  generated:          {counts.generated}",
                f"  parse drops:        {counts.parse_drops}",
                f"  consistency kept:   {counts.consistency_kept}",
                f"  entered rejection:  {counts.entered_rejection}",
                f"  retained:           {counts.retained}",
                f"  yield:              {counts.yield_value:.2f}",
            ]
        lines += [
            "",
            f"skills extracted:    {self.skills_extracted}",
            f"retained total:      {self.retained_total}",
            f"delta mean/median:   {self.delta_mean:.4f} / {self.delta_median:.4f}",
            f"delta variance:      {self.delta_variance:.4f}",
            f"zero-delta fraction: {self.zero_delta_fraction:.2%}",
        ]
        if self.e_vendi is not None:
            lines.append(f"retained E-Vendi:    {self.e_vendi:.4f}")
        if self.histogram_text:
            lines += ["", self.histogram_text]
        return "\n".join(lines)


def _run_stage(
    gateway: Gateway,
    cfg: PipelineConfig,
    seeds: List[PromptRecord],
    images: List[str],
    rng: np.random.Generator,
    n_candidates: int,
    stage_name: str,
    skill_pool: Optional[List[Skill]] = None,
    judge=None,
) -> Tuple[StageCounts, List[Candidate]]:
    counts = StageCounts()
    kept: List[Candidate] = []
    for i in range(n_candidates):
        seed = seeds[int(rng.integers(len(seeds)))]
        new_image = images[int(rng.integers(len(images)))]
        candidate_id = f"{stage_name}-{i:05d}"
        if stage_name == "stage2":
            skills = sample_skills(skill_pool, cfg.k_skills, rng)
            record = skill_guided_generate(
                gateway, seed, skills, new_image, candidate_id
            )
        else:
            record = seed_guided_generate(
                gateway, seed, new_image, candidate_id, domain=cfg.domain
            )
        counts.generated += 1
        if record is None:
            counts.parse_drops += 1
            continue
        decision = consistency_filter(
            gateway,
            record,
            k_rollouts=cfg.k_rollouts,
            consistency_floor=cfg.consistency_floor,
            grouping_mode=cfg.grouping_mode,
            judge=judge,
            include_unextracted=cfg.include_unextracted,
        )
        if not decision.keep:
            continue
        counts.consistency_kept += 1
        candidate = measure_candidate(
            gateway,
            Candidate(record=record, decision=decision),
            cfg.k_rollouts,
            grouping_mode=cfg.grouping_mode,
            judge=judge,
            include_unextracted=cfg.include_unextracted,
        )
        kept.append(candidate)
    return counts, kept


def run_pipeline(cfg: PipelineConfig, gateway: Optional[Gateway] = None) -> RunReport:
    """Execute dedup, both generation stages, skill extraction and rejection.

    Writes the retained dataset to ``cfg.output_path`` and a report (JSON and
    text) under ``cfg.run_dir``. Fully resumable through the gateway cache.
    """
    from .dataset_io import read_dataset  # local import to avoid cycle noise

    seeds: List[PromptRecord] = []
    for path in cfg.seed_dataset_paths:
        seeds.extend(read_dataset(path))
    if not seeds:
        raise ConfigError("seed dataset is empty")

    image_map = list_images(cfg.image_source_paths)
    holdout_map = list_images(cfg.holdout_image_paths)
    flagged_count = 0
    if image_map:
        result = dedup(image_map, holdout_map, threshold=cfg.dedup_threshold)
        images = sorted(result.retained)
        flagged_count = len(result.flagged)
    else:
        images = []
    if not images:
        raise ConfigError("no usable images after deduplication")

    if gateway is None:
        gateway = Gateway(cfg.endpoints, Path(cfg.run_dir) / "cache")
    judge = gateway.make_judge() if cfg.grouping_mode == "judge" else None
    rng = np.random.default_rng(cfg.random_seed)

    # Stage 1: seed-guided generation + consistency filtering + measurement.
    stage1_counts = StageCounts()
    stage1_candidates: List[Candidate] = []
    if "seed" in cfg.stages:
        stage1_counts, stage1_candidates = _run_stage(
            gateway, cfg, seeds, images, rng, cfg.n_stage1_candidates,
            "stage1", judge=judge,
        )

    # Skill extraction over delta prompts in the candidate pool. When stage 1
    # is skipped, divergence is measured over the raw seeds instead.
    skill_sources = stage1_candidates
    if "skill" in cfg.stages and not skill_sources:
        for seed in seeds:
            decision = consistency_filter(
                gateway, seed,
                k_rollouts=cfg.k_rollouts,
                consistency_floor=cfg.consistency_floor,
                grouping_mode=cfg.grouping_mode,
                judge=judge,
                include_unextracted=cfg.include_unextracted,
            )
            candidate = measure_candidate(
                gateway, Candidate(record=seed, decision=decision),
                cfg.k_rollouts, grouping_mode=cfg.grouping_mode, judge=judge,
                include_unextracted=cfg.include_unextracted,
            )
            skill_sources.append(candidate)

    skill_pool: List[Skill] = []
    if "skill" in cfg.stages:
        for candidate in skill_sources:
            if candidate.divergence is None or candidate.divergence.delta <= Thresholds().epsilon:
                continue
            skill = extract_skill(
                gateway, candidate.record,
                candidate.decision.teacher_rollouts,
                candidate.student_rollouts,
            )
            if skill is not None:
                skill_pool.append(skill)

    # Stage 2: skill-guided generation seeded by stage-1 outputs.
    stage2_counts = StageCounts()
    stage2_candidates: List[Candidate] = []
    if "skill" in cfg.stages and cfg.n_stage2_candidates > 0:
        stage2_seeds = [c.record for c in stage1_candidates] or seeds
        stage2_counts, stage2_candidates = _run_stage(
            gateway, cfg, stage2_seeds, images, rng, cfg.n_stage2_candidates,
            "stage2", skill_pool=skill_pool, judge=judge,
        )

    # Rejection: keep only delta > epsilon, per stage for yield reporting.
    retained1, yield1 = rejection_stage(stage1_candidates)
    retained2, yield2 = rejection_stage(stage2_candidates)
    stage1_counts.entered_rejection = len(stage1_candidates)
    stage1_counts.retained = len(retained1)
    stage1_counts.yield_value = yield1
    stage2_counts.entered_rejection = len(stage2_candidates)
    stage2_counts.retained = len(retained2)
    stage2_counts.yield_value = yield2
    retained = retained1 + retained2

    output_path = Path(cfg.output_path)
    write_dataset([c.record for c in retained], output_path)

    report = RunReport(
        stage1=stage1_counts,
        stage2=stage2_counts,
        seeds_loaded=len(seeds),
        images_available=len(images),
        images_flagged=flagged_count,
        skills_extracted=len(skill_pool),
        retained_total=len(retained),
    )
    measured = [c.divergence for c in stage1_candidates + stage2_candidates
                if c.divergence is not None]
    if measured:
        stats = pool_statistics(measured)
        report.delta_mean = stats.mean
        report.delta_median = stats.median
        report.delta_variance = stats.variance
        report.zero_delta_fraction = stats.zero_delta_fraction
        report.histogram_text = stats.render()
    if retained and "embedder" in cfg.endpoints:
        report.e_vendi = measure_e_vendi(
            [c.record.text for c in retained],
            _GatewayEmbedder(gateway),
            seed=cfg.random_seed,
        )

    run_dir = Path(cfg.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2)
    (run_dir / "report.txt").write_text(report.render() + "\n", encoding="utf-8")
    return report


class _GatewayEmbedder:
    def __init__(self, gateway: Gateway):
        self.gateway = gateway

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return self.gateway.embed(texts)
