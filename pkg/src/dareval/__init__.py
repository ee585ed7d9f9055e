"""Attention rebalancing kernel and checkpoint-based evaluation harness."""

__version__ = "0.1.0"

from .cases import (
    Checkpoint,
    ElementPools,
    EvalCase,
    EvalDimension,
    StoryAnswerSet,
    TaskKind,
    dataset_statistics,
    load_manifest,
    save_manifest,
    validate_case,
)
from .exceptions import DarevalError
from .harness import evaluate_case, evaluate_manifest
from .judge import JudgeClient, JudgeConfig, StubJudgeTransport, VerdictCache
from .rebalance import (
    AttentionMap,
    AttentionStats,
    RebalanceConfig,
    aggregate_scores,
    baseline_attention,
    compute_weights,
    normalize_minmax,
    probe_attention,
    rebalance_pipeline,
    rebalanced_attention,
    sample_query_indices,
)
from .reporting import ScoreReport, compare_reports, emit_report, model_report, stability_check
from .scoring import CaseScore, DimensionScore, Verdict, case_score, dimension_score, story_score, task_aggregate
from .templates import fill_template, synthesize_cases
from .tensors import HeadedTensor, KeySegments, Segment, read_segments, read_tensor, write_segments, write_tensor
