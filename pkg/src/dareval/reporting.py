"""Score reports: assembly, rendering, comparison, and stability runs.

A ScoreReport stores the per-task scores, the per-case detail, and an
``avg`` column. When a report is entered from published numbers the stated
average can disagree with the mean of the task columns; rendering always
recomputes and flags a mismatch of 0.05 or more instead of silently
adopting either value.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from .cases import EvalDimension, TaskKind
from .exceptions import CoverageError, DarevalError
from .scoring import CaseScore, DimensionScore

TASK_TITLES = {
    TaskKind.OBJECT_COMPOSITION: "Object",
    TaskKind.SPATIAL_COMPOSITION: "Spatial",
    TaskKind.ATTRIBUTE_DISENTANGLEMENT: "Attribute",
    TaskKind.COMPONENT_TRANSFER: "Component",
    TaskKind.FG_BG_COMPOSITION: "FG/BG",
    TaskKind.STORY_GENERATION: "Story",
}

AVG_MISMATCH_THRESHOLD = 0.05


@dataclass(frozen=True)
class ScoreReport:
    model_name: str
    per_task: dict[TaskKind, float]
    avg: float
    per_case: tuple[CaseScore, ...] = ()
    metadata: dict = field(default_factory=dict)

    @property
    def recomputed_avg(self) -> float:
        if not self.per_task:
            raise DarevalError("report has no task scores")
        return sum(self.per_task.values()) / len(self.per_task)

    @property
    def avg_mismatch(self) -> float:
        """Absolute gap between the stored and recomputed averages."""
        return abs(self.avg - self.recomputed_avg)

    def missing_tasks(self) -> list[TaskKind]:
        return [t for t in TaskKind if t not in self.per_task]


@dataclass(frozen=True)
class StabilityResult:
    run_scores: tuple[float, ...]
    max_discrepancy: float


def model_report(
    model_name: str,
    per_task: dict[TaskKind, float],
    per_case: tuple[CaseScore, ...] = (),
    stated_avg: float | None = None,
    metadata: dict | None = None,
) -> ScoreReport:
    """Assemble a report; avg defaults to the unweighted mean of task scores."""
    if not per_task:
        raise DarevalError("per_task must name at least one task")
    recomputed = sum(per_task.values()) / len(per_task)
    return ScoreReport(
        model_name=model_name,
        per_task=dict(per_task),
        avg=recomputed if stated_avg is None else float(stated_avg),
        per_case=tuple(per_case),
        metadata=dict(metadata or {}),
    )


def _case_to_dict(score: CaseScore) -> dict:
    return {
        "case_id": score.case_id,
        "final": score.final,
        "components": list(score.components) if score.components is not None else None,
        "per_dimension": [
            {
                "dimension": d.dimension.letter,
                "raw": d.raw,
                "capped": d.capped,
                "hard_failed": d.hard_failed,
            }
            for d in score.per_dimension
        ],
    }


def _case_from_dict(entry: dict) -> CaseScore:
    return CaseScore(
        case_id=entry["case_id"],
        per_dimension=tuple(
            DimensionScore(
                dimension=EvalDimension(d["dimension"]),
                raw=d["raw"],
                capped=d["capped"],
                hard_failed=d["hard_failed"],
            )
            for d in entry["per_dimension"]
        ),
        final=entry["final"],
        components=tuple(entry["components"]) if entry.get("components") is not None else None,
    )


def report_to_json(report: ScoreReport) -> bytes:
    payload = {
        "model_name": report.model_name,
        "per_task": {t.value: s for t, s in report.per_task.items()},
        "avg": report.avg,
        "recomputed_avg": report.recomputed_avg,
        "per_case": [_case_to_dict(c) for c in report.per_case],
        "metadata": report.metadata,
    }
    return (json.dumps(payload, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def report_from_json(blob: bytes | str) -> ScoreReport:
    payload = json.loads(blob)
    return ScoreReport(
        model_name=payload["model_name"],
        per_task={TaskKind(k): v for k, v in payload["per_task"].items()},
        avg=payload["avg"],
        per_case=tuple(_case_from_dict(c) for c in payload["per_case"]),
        metadata=payload.get("metadata", {}),
    )


def _markdown(report: ScoreReport) -> str:
    header = ["Model"] + [TASK_TITLES[t] for t in TaskKind] + ["Avg. Score"]
    cells = [report.model_name]
    for task in TaskKind:
        cells.append(f"{report.per_task[task]:.2f}" if task in report.per_task else "—")
    cells.append(f"{report.avg:.2f}")
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "---|" * len(header),
        "| " + " | ".join(cells) + " |",
    ]
    if report.avg_mismatch >= AVG_MISMATCH_THRESHOLD:
        lines.append(
            f"\n> note: stated average {report.avg:.2f} differs from the recomputed "
            f"task mean {report.recomputed_avg:.2f} by {report.avg_mismatch:.2f}"
        )
    missing = report.missing_tasks()
    if missing:
        lines.append(
            "\n> note: average over present tasks only; missing: "
            + ", ".join(TASK_TITLES[t] for t in missing)
        )
    return "\n".join(lines) + "\n"


def _csv(report: ScoreReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["case_id", "final", "checkpoint_part", "answer_part", "per_dimension"])
    for case in report.per_case:
        cp, ap = case.components if case.components is not None else ("", "")
        detail = json.dumps(_case_to_dict(case)["per_dimension"], separators=(",", ":"))
        writer.writerow([case.case_id, f"{case.final:.4f}", cp, ap, detail])
    writer.writerow(["__summary__", f"{report.avg:.4f}", "", "", ""])
    return buf.getvalue()


def emit_report(report: ScoreReport, format: str) -> bytes:
    """Render to markdown (table row), json (lossless), or csv (per case)."""
    if format == "markdown":
        return _markdown(report).encode("utf-8")
    if format == "json":
        return report_to_json(report)
    if format == "csv":
        return _csv(report).encode("utf-8")
    raise DarevalError(f"unknown report format {format!r}")


@dataclass(frozen=True)
class ReportDelta:
    per_task: dict[TaskKind, float]
    avg: float


def compare_reports(a: ScoreReport, b: ScoreReport) -> ReportDelta:
    """Signed per-task and average deltas, b minus a; task sets must match."""
    if set(a.per_task) != set(b.per_task):
        only_a = sorted(t.value for t in set(a.per_task) - set(b.per_task))
        only_b = sorted(t.value for t in set(b.per_task) - set(a.per_task))
        raise CoverageError(
            f"reports cover different tasks: only_in_a={only_a} only_in_b={only_b}"
        )
    deltas = {t: b.per_task[t] - a.per_task[t] for t in a.per_task}
    return ReportDelta(per_task=deltas, avg=b.avg - a.avg)


def stability_check(evaluate, runs: int) -> StabilityResult:
    """Run the evaluation closure repeatedly on identical inputs.

    The closure returns either a ScoreReport or a bare average score.
    """
    if runs < 2:
        raise DarevalError(f"stability check needs runs >= 2, got {runs}")
    scores = []
    for _ in range(runs):
        result = evaluate()
        scores.append(result.avg if isinstance(result, ScoreReport) else float(result))
    return StabilityResult(
        run_scores=tuple(scores),
        max_discrepancy=max(scores) - min(scores),
    )
