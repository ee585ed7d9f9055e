"""End-to-end evaluation: manifest cases + generated images -> ScoreReport.

One generated image per case, matched by the ``<case_id>.<ext>`` filename
convention. Cases fan out across a thread pool bounded by the judge's
concurrency limit; verdicts (and story answer-set scores) are cached by
content so repeated runs never re-ask the judge about identical inputs.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .cases import EvalCase, TaskKind
from .exceptions import DarevalError
from .judge import (
    JudgeClient,
    KIND_ANSWER_SET,
    KIND_VERDICTS,
    VerdictCache,
    render_answer_set_prompt,
    render_eval_prompt,
)
from .reporting import ScoreReport, model_report
from .scoring import CaseScore, Verdict, case_score, task_aggregate

MISSING_SKIP = "skip"
MISSING_FATAL = "fatal"


def find_generated_images(images_dir: str | Path, cases: list[EvalCase]) -> tuple[dict[str, Path], list[str]]:
    """Map case_id -> image path under images_dir; second item lists misses."""
    images_dir = Path(images_dir)
    found: dict[str, Path] = {}
    missing: list[str] = []
    for case in cases:
        matches = sorted(images_dir.glob(f"{case.case_id}.*"))
        if matches:
            found[case.case_id] = matches[0]
        else:
            missing.append(case.case_id)
    return found, missing


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def evaluate_case(
    case: EvalCase,
    image_path: str | Path,
    client: JudgeClient,
    cache: VerdictCache | None = None,
    per_checkpoint: bool = False,
) -> CaseScore:
    """Obtain verdicts (and an answer-set score for stories), then score."""
    image_path = Path(image_path)
    image_digest = _file_digest(image_path)
    model = client.cfg.model_name

    prompt = render_eval_prompt(case, str(image_path))
    verdicts: list[Verdict] | None = None
    if cache is not None:
        hit = cache.get(VerdictCache.key(KIND_VERDICTS, case.case_id, image_digest, model, prompt.digest()))
        if hit is not None:
            verdicts = [Verdict(**v) for v in hit["verdicts"]]
    if verdicts is None:
        batch = client.verdicts_for_case(case, str(image_path), per_checkpoint=per_checkpoint)
        verdicts = list(batch.verdicts)
        if cache is not None:
            cache.put(
                VerdictCache.key(KIND_VERDICTS, case.case_id, image_digest, model, prompt.digest()),
                {
                    "verdicts": [
                        {"checkpoint_id": v.checkpoint_id, "passed": v.passed, "justification": v.justification}
                        for v in verdicts
                    ],
                    "attempt_count": batch.attempt_count,
                },
            )

    answer_score = None
    if case.task.uses_answer_set:
        ans_prompt = render_answer_set_prompt(case, str(image_path))
        if cache is not None:
            hit = cache.get(
                VerdictCache.key(KIND_ANSWER_SET, case.case_id, image_digest, model, ans_prompt.digest())
            )
            if hit is not None:
                answer_score = hit["score"]
        if answer_score is None:
            answer_score = client.score_answer_set(case, str(image_path))
            if cache is not None:
                cache.put(
                    VerdictCache.key(KIND_ANSWER_SET, case.case_id, image_digest, model, ans_prompt.digest()),
                    {"score": answer_score},
                )

    return case_score(case, verdicts, answer_set_score=answer_score)


@dataclass(frozen=True)
class EvaluationOutcome:
    report: ScoreReport
    skipped_cases: tuple[str, ...]


def evaluate_manifest(
    cases: list[EvalCase],
    images_dir: str | Path,
    client: JudgeClient,
    model_name: str,
    cache: VerdictCache | None = None,
    missing: str = MISSING_FATAL,
    per_checkpoint: bool = False,
) -> EvaluationOutcome:
    """Evaluate every case with a generated image; aggregate per task."""
    if missing not in (MISSING_SKIP, MISSING_FATAL):
        raise DarevalError(f"missing policy must be '{MISSING_SKIP}' or '{MISSING_FATAL}', got {missing!r}")
    images, absent = find_generated_images(images_dir, cases)
    if absent and missing == MISSING_FATAL:
        raise FileNotFoundError(
            f"no generated image for case(s): {', '.join(absent)} under {images_dir}"
        )
    runnable = [c for c in cases if c.case_id in images]
    if not runnable:
        raise DarevalError("no case has a generated image; nothing to evaluate")

    workers = min(client.cfg.max_concurrent, len(runnable))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(evaluate_case, case, images[case.case_id], client, cache, per_checkpoint)
            for case in runnable
        ]
        case_scores = [f.result() for f in futures]

    by_task: dict[TaskKind, list[CaseScore]] = {}
    task_of = {c.case_id: c.task for c in runnable}
    for score in case_scores:
        by_task.setdefault(task_of[score.case_id], []).append(score)
    per_task = {task: task_aggregate(scores) for task, scores in by_task.items()}

    report = model_report(
        model_name=model_name,
        per_task=per_task,
        per_case=tuple(case_scores),
        metadata={
            "judge_model": client.cfg.model_name,
            "judge_config_digest": client.cfg.digest(),
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "cases_evaluated": len(case_scores),
            "cases_skipped": list(absent) if missing == MISSING_SKIP else [],
        },
    )
    return EvaluationOutcome(report=report, skipped_cases=tuple(absent))
