"""Checkpoint score arithmetic.

Per dimension: the score is the fraction of passed checkpoints, capped at
0.4 whenever that dimension's hard checkpoint failed. Per case: the mean of
capped dimension scores, rescaled to [0, 100]. Story cases blend the
checkpoint score (40%) with an answer-set score (60%). Task scores are
unweighted means over cases.
"""

from __future__ import annotations

from dataclasses import dataclass

from .cases import Checkpoint, EvalCase, EvalDimension
from .exceptions import CoverageError, DarevalError

HARD_FAIL_CAP = 0.4
STORY_CHECKPOINT_WEIGHT = 0.4
STORY_ANSWER_SET_WEIGHT = 0.6


@dataclass(frozen=True)
class Verdict:
    checkpoint_id: str
    passed: bool
    justification: str = ""


@dataclass(frozen=True)
class DimensionScore:
    dimension: EvalDimension
    raw: float
    capped: float
    hard_failed: bool


@dataclass(frozen=True)
class CaseScore:
    case_id: str
    per_dimension: tuple[DimensionScore, ...]
    final: float
    # story only: (checkpoint part, answer-set part), both on [0, 100]
    components: tuple[float, float] | None = None


def _check_coverage(verdicts: list[Verdict], checkpoints: list[Checkpoint] | tuple[Checkpoint, ...]) -> dict[str, Verdict]:
    expected = {c.id for c in checkpoints}
    got: dict[str, Verdict] = {}
    for v in verdicts:
        if v.checkpoint_id in got:
            raise CoverageError(
                f"duplicate verdict for checkpoint {v.checkpoint_id}", extra=[v.checkpoint_id]
            )
        got[v.checkpoint_id] = v
    missing = sorted(expected - got.keys())
    extra = sorted(got.keys() - expected)
    if missing or extra:
        raise CoverageError(
            f"verdicts do not cover checkpoints exactly: missing={missing} extra={extra}",
            missing=missing,
            extra=extra,
        )
    return got


def dimension_score(verdicts: list[Verdict], checkpoints: list[Checkpoint] | tuple[Checkpoint, ...]) -> DimensionScore:
    """Score one dimension from its verdicts.

    raw is the pass fraction; capped applies the hard-constraint rule:
    min(raw, 0.4) when the dimension's hard checkpoint failed.
    """
    if not checkpoints:
        raise CoverageError("dimension has no checkpoints")
    dims = {c.dimension for c in checkpoints}
    if len(dims) != 1:
        raise CoverageError(f"checkpoints span several dimensions: {sorted(d.letter for d in dims)}")
    by_id = _check_coverage(verdicts, checkpoints)

    passes = sum(1 for c in checkpoints if by_id[c.id].passed)
    raw = passes / len(checkpoints)
    hard_failed = any(c.hard and not by_id[c.id].passed for c in checkpoints)
    capped = min(raw, HARD_FAIL_CAP) if hard_failed else raw
    return DimensionScore(dimension=dims.pop(), raw=raw, capped=capped, hard_failed=hard_failed)


def case_score(
    case: EvalCase,
    verdicts: list[Verdict],
    answer_set_score: float | None = None,
) -> CaseScore:
    """Score one case from a full verdict batch.

    Verdicts must cover every checkpoint of every active dimension exactly
    once. Story cases additionally need answer_set_score on [0, 100].
    """
    _check_coverage(verdicts, case.checkpoints)
    by_id = {v.checkpoint_id: v for v in verdicts}

    per_dimension = []
    for dim in case.dimensions:
        group = case.checkpoints_for(dim)
        if not group:
            raise CoverageError(f"case {case.case_id}: active dimension {dim.letter} has no checkpoints")
        per_dimension.append(dimension_score([by_id[c.id] for c in group], group))

    checkpoint_part = 100.0 * (sum(d.capped for d in per_dimension) / len(per_dimension))

    if case.task.uses_answer_set:
        if answer_set_score is None:
            raise DarevalError(f"case {case.case_id}: story case needs an answer-set score")
        final = story_score(checkpoint_part, answer_set_score)
        components = (checkpoint_part, float(answer_set_score))
    else:
        if answer_set_score is not None:
            raise DarevalError(f"case {case.case_id}: answer-set score given for a non-story case")
        final = checkpoint_part
        components = None

    return CaseScore(
        case_id=case.case_id,
        per_dimension=tuple(per_dimension),
        final=final,
        components=components,
    )


def story_score(checkpoint_score: float, answer_set_score: float) -> float:
    """40/60 blend of checkpoint and answer-set scores, both on [0, 100]."""
    for name, value in (("checkpoint_score", checkpoint_score), ("answer_set_score", answer_set_score)):
        if not 0.0 <= value <= 100.0:
            raise DarevalError(f"{name} must be in [0, 100], got {value}")
    return STORY_CHECKPOINT_WEIGHT * checkpoint_score + STORY_ANSWER_SET_WEIGHT * answer_set_score


def task_aggregate(scores: list[CaseScore]) -> float:
    """Unweighted mean of case finals."""
    if not scores:
        raise DarevalError("cannot aggregate an empty score list")
    return sum(s.final for s in scores) / len(scores)
