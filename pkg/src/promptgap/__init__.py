"""Toolkit for measuring teacher-student answer divergence on reasoning
prompts and curating distillation prompt datasets around it."""

from .answers import (
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
)
from .divergence import (
    DivergenceRecord,
    PoolStatistics,
    Thresholds,
    answer_divergence,
    classify,
    consistency,
    laplace_smooth,
    measure,
    pool_statistics,
)
from .diversity import (
    EmbeddingMatrix,
    cosine_kernel,
    embedding_diversity,
    measure_e_vendi,
    read_embeddings,
    vendi_score,
    write_embeddings,
)
from .sampling import (
    ClusterAssignment,
    MatchResult,
    balanced_sample,
    kmeans,
    match_diversity,
)
from .gateway import DecodingParams, EndpointConfig, Gateway, RetryPolicy
from .dataset_io import (
    ImageHash,
    dedup,
    dhash,
    hamming_distance,
    read_dataset,
    write_dataset,
)
from .synthesis import (
    Candidate,
    PipelineConfig,
    RunReport,
    Skill,
    consistency_filter,
    extract_skill,
    rejection_stage,
    run_pipeline,
    seed_guided_generate,
    skill_guided_generate,
)

__version__ = "0.1.0"
