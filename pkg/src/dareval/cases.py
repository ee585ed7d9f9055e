"""Benchmark case model: tasks, dimensions, checkpoints, and manifests.

Cases live in a JSON manifest (one document, a ``cases`` array). Every case
names a task, an instruction, reference-image handles, and a list of binary
checkpoints tagged with an evaluation dimension; story cases additionally
carry a human answer set. Validation enforces the structural rules: 2-4
checkpoints per active dimension with exactly one hard constraint each,
and per-task legal reference counts.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

from .exceptions import ManifestError

MANIFEST_VERSION = 1


class EvalDimension(Enum):
    INSTRUCTION_FOLLOWING = "A"
    IDENTITY = "B"
    STRUCTURE = "C"
    CROSS_REF_CONSISTENCY = "D"
    CAUSALITY = "E"
    TEXT_GROUNDING = "F"
    OVERALL_USABILITY = "G"

    @property
    def letter(self) -> str:
        return self.value

    @classmethod
    def from_letter(cls, letter: str) -> "EvalDimension":
        try:
            return cls(letter)
        except ValueError:
            raise ManifestError(f"unknown evaluation dimension {letter!r}") from None


DIMENSION_TITLES = {
    EvalDimension.INSTRUCTION_FOLLOWING: "Instruction Following",
    EvalDimension.IDENTITY: "Identity / Fidelity",
    EvalDimension.STRUCTURE: "Structure / Geometry",
    EvalDimension.CROSS_REF_CONSISTENCY: "Cross-Reference Consistency",
    EvalDimension.CAUSALITY: "Causality",
    EvalDimension.TEXT_GROUNDING: "Text Grounding",
    EvalDimension.OVERALL_USABILITY: "Overall Usability",
}


class TaskKind(Enum):
    OBJECT_COMPOSITION = "object_composition"
    SPATIAL_COMPOSITION = "spatial_composition"
    ATTRIBUTE_DISENTANGLEMENT = "attribute_disentanglement"
    COMPONENT_TRANSFER = "component_transfer"
    FG_BG_COMPOSITION = "fg_bg_composition"
    STORY_GENERATION = "story_generation"

    @classmethod
    def from_value(cls, value: str) -> "TaskKind":
        try:
            return cls(value)
        except ValueError:
            raise ManifestError(f"unknown task kind {value!r}") from None

    @property
    def uses_answer_set(self) -> bool:
        return self is TaskKind.STORY_GENERATION


_COMPOSITIONAL_DIMS = (
    EvalDimension.INSTRUCTION_FOLLOWING,
    EvalDimension.IDENTITY,
    EvalDimension.STRUCTURE,
    EvalDimension.CROSS_REF_CONSISTENCY,
    EvalDimension.OVERALL_USABILITY,
)

# Default active dimensions per task; story adds causality. Text grounding
# is opt-in per case via an explicit active_dimensions override.
DEFAULT_ACTIVE_DIMENSIONS: dict[TaskKind, tuple[EvalDimension, ...]] = {
    TaskKind.OBJECT_COMPOSITION: _COMPOSITIONAL_DIMS,
    TaskKind.SPATIAL_COMPOSITION: _COMPOSITIONAL_DIMS,
    TaskKind.ATTRIBUTE_DISENTANGLEMENT: _COMPOSITIONAL_DIMS,
    TaskKind.COMPONENT_TRANSFER: _COMPOSITIONAL_DIMS,
    TaskKind.FG_BG_COMPOSITION: _COMPOSITIONAL_DIMS,
    TaskKind.STORY_GENERATION: (
        EvalDimension.INSTRUCTION_FOLLOWING,
        EvalDimension.IDENTITY,
        EvalDimension.STRUCTURE,
        EvalDimension.CROSS_REF_CONSISTENCY,
        EvalDimension.CAUSALITY,
        EvalDimension.OVERALL_USABILITY,
    ),
}

# Legal reference-image counts per task. Object composition admits the
# extended 4- and 5-reference subset used for reference-count ablations.
LEGAL_REFERENCE_COUNTS: dict[TaskKind, tuple[int, ...]] = {
    TaskKind.OBJECT_COMPOSITION: (2, 3, 4, 5),
    TaskKind.SPATIAL_COMPOSITION: (2, 3),
    TaskKind.ATTRIBUTE_DISENTANGLEMENT: (3,),
    TaskKind.COMPONENT_TRANSFER: (2, 3),
    TaskKind.FG_BG_COMPOSITION: (2,),
    TaskKind.STORY_GENERATION: (2, 3),
}

MIN_CHECKPOINTS_PER_DIMENSION = 2
MAX_CHECKPOINTS_PER_DIMENSION = 4


@dataclass(frozen=True)
class Checkpoint:
    id: str
    dimension: EvalDimension
    question: str
    hard: bool = False


@dataclass(frozen=True)
class StoryAnswerSet:
    narrative: str
    likely_outcomes: tuple[str, ...]
    counterfactuals: tuple[str, ...] = ()


@dataclass(frozen=True)
class EvalCase:
    case_id: str
    task: TaskKind
    instruction: str
    reference_images: tuple[str, ...]
    checkpoints: tuple[Checkpoint, ...] = ()
    answer_set: StoryAnswerSet | None = None
    active_dimensions: tuple[EvalDimension, ...] | None = None
    reference_prompts: tuple[str, ...] | None = None

    @property
    def dimensions(self) -> tuple[EvalDimension, ...]:
        if self.active_dimensions is not None:
            return self.active_dimensions
        return DEFAULT_ACTIVE_DIMENSIONS[self.task]

    def checkpoints_for(self, dimension: EvalDimension) -> tuple[Checkpoint, ...]:
        return tuple(c for c in self.checkpoints if c.dimension is dimension)

    def checkpoint_ids(self) -> list[str]:
        return [c.id for c in self.checkpoints]


@dataclass(frozen=True)
class ElementPools:
    objects: tuple[str, ...] = ()
    scenes: tuple[str, ...] = ()
    styles: tuple[str, ...] = ()
    spatial_relations: tuple[str, ...] = ()
    clothing: tuple[str, ...] = ()
    accessories: tuple[str, ...] = ()

    @classmethod
    def from_file(cls, path: str | Path) -> "ElementPools":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: invalid pools JSON at line {exc.lineno}: {exc.msg}") from exc
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: tuple(v) for k, v in payload.items() if k in known}
        return cls(**kwargs)

    def require(self, *names: str) -> None:
        for name in names:
            if not getattr(self, name):
                raise ManifestError(f"element pool {name!r} is empty or missing")


def validate_case(case: EvalCase, allow_empty_checkpoints: bool = False) -> list[str]:
    """Structural violations for one case; empty list means valid."""
    problems: list[str] = []
    pre = f"case {case.case_id}: "

    legal = LEGAL_REFERENCE_COUNTS[case.task]
    if len(case.reference_images) not in legal:
        problems.append(
            pre + f"{case.task.value} requires {legal} reference images, got {len(case.reference_images)}"
        )
    for pos, handle in enumerate(case.reference_images):
        if not isinstance(handle, str) or not handle.strip():
            problems.append(pre + f"reference image {pos} has a missing or empty handle")

    if case.task.uses_answer_set:
        if case.answer_set is None:
            problems.append(pre + "story case requires an answer_set")
        elif not case.answer_set.likely_outcomes:
            problems.append(pre + "answer_set.likely_outcomes must be non-empty")
    elif case.answer_set is not None:
        problems.append(pre + f"{case.task.value} case must not carry an answer_set")

    dup = [cid for cid, n in Counter(case.checkpoint_ids()).items() if n > 1]
    if dup:
        problems.append(pre + f"duplicate checkpoint ids: {sorted(dup)}")

    active = set(case.dimensions)
    for cp in case.checkpoints:
        if cp.dimension not in active:
            problems.append(
                pre + f"checkpoint {cp.id} uses dimension {cp.dimension.letter}, "
                f"not active for this case"
            )

    if not case.checkpoints:
        if not allow_empty_checkpoints:
            problems.append(pre + "case has no checkpoints (skeleton manifests need explicit opt-in)")
        return problems

    for dim in case.dimensions:
        group = case.checkpoints_for(dim)
        if not MIN_CHECKPOINTS_PER_DIMENSION <= len(group) <= MAX_CHECKPOINTS_PER_DIMENSION:
            problems.append(
                pre + f"dimension {dim.letter} has {len(group)} checkpoints, "
                f"expected {MIN_CHECKPOINTS_PER_DIMENSION}-{MAX_CHECKPOINTS_PER_DIMENSION}"
            )
        hard = [c for c in group if c.hard]
        if len(hard) != 1:
            problems.append(
                pre + f"dimension {dim.letter} has {len(hard)} hard checkpoints, expected exactly 1"
            )
    return problems


def _case_from_dict(entry: dict, position: int) -> EvalCase:
    if not isinstance(entry, dict):
        raise ManifestError(f"case #{position} is not an object")
    case_id = entry.get("case_id")
    if not case_id or not isinstance(case_id, str):
        raise ManifestError(f"case #{position} is missing a case_id")

    def fail(msg: str):
        raise ManifestError(f"case {case_id}: {msg}")

    if "task" not in entry:
        fail("missing field 'task'")
    task = TaskKind.from_value(entry["task"])
    instruction = entry.get("instruction")
    if not isinstance(instruction, str) or not instruction:
        fail("missing or empty field 'instruction'")
    refs = entry.get("reference_images")
    if not isinstance(refs, list) or not refs:
        fail("missing or empty field 'reference_images'")

    checkpoints = []
    for cp in entry.get("checkpoints", []):
        for key in ("id", "dimension", "question"):
            if key not in cp:
                fail(f"checkpoint missing field {key!r}")
        checkpoints.append(
            Checkpoint(
                id=cp["id"],
                dimension=EvalDimension.from_letter(cp["dimension"]),
                question=cp["question"],
                hard=bool(cp.get("hard", False)),
            )
        )

    answer_set = None
    if "answer_set" in entry and entry["answer_set"] is not None:
        raw = entry["answer_set"]
        if not isinstance(raw, dict) or "narrative" not in raw or "likely_outcomes" not in raw:
            fail("answer_set must carry 'narrative' and 'likely_outcomes'")
        answer_set = StoryAnswerSet(
            narrative=raw["narrative"],
            likely_outcomes=tuple(raw["likely_outcomes"]),
            counterfactuals=tuple(raw.get("counterfactuals", [])),
        )

    active = None
    if "active_dimensions" in entry and entry["active_dimensions"] is not None:
        active = tuple(EvalDimension.from_letter(v) for v in entry["active_dimensions"])

    ref_prompts = None
    if "reference_prompts" in entry and entry["reference_prompts"] is not None:
        ref_prompts = tuple(entry["reference_prompts"])

    return EvalCase(
        case_id=case_id,
        task=task,
        instruction=instruction,
        reference_images=tuple(refs),
        checkpoints=tuple(checkpoints),
        answer_set=answer_set,
        active_dimensions=active,
        reference_prompts=ref_prompts,
    )


def load_manifest(path: str | Path, allow_empty_checkpoints: bool = False) -> list[EvalCase]:
    """Parse and validate a case manifest; raises ManifestError on any violation."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(payload, dict) or "cases" not in payload:
        raise ManifestError(f"{path}: manifest must be an object with a 'cases' array")
    version = payload.get("version")
    if version != MANIFEST_VERSION:
        raise ManifestError(f"{path}: unsupported manifest version {version!r}")

    cases = [_case_from_dict(entry, i) for i, entry in enumerate(payload["cases"])]

    seen = Counter(c.case_id for c in cases)
    dup = sorted(cid for cid, n in seen.items() if n > 1)
    if dup:
        raise ManifestError(f"{path}: duplicate case ids: {dup}")

    problems = []
    for case in cases:
        problems.extend(validate_case(case, allow_empty_checkpoints=allow_empty_checkpoints))
    if problems:
        raise ManifestError(f"{path}: manifest violations:\n" + "\n".join(problems))
    return cases


def case_to_dict(case: EvalCase) -> dict:
    entry: dict = {
        "case_id": case.case_id,
        "task": case.task.value,
        "instruction": case.instruction,
        "reference_images": list(case.reference_images),
        "checkpoints": [
            {"id": c.id, "dimension": c.dimension.letter, "question": c.question, "hard": c.hard}
            for c in case.checkpoints
        ],
    }
    if case.active_dimensions is not None:
        entry["active_dimensions"] = [d.letter for d in case.active_dimensions]
    if case.answer_set is not None:
        entry["answer_set"] = {
            "narrative": case.answer_set.narrative,
            "likely_outcomes": list(case.answer_set.likely_outcomes),
            "counterfactuals": list(case.answer_set.counterfactuals),
        }
    if case.reference_prompts is not None:
        entry["reference_prompts"] = list(case.reference_prompts)
    return entry


def save_manifest(path: str | Path, cases: list[EvalCase]) -> None:
    payload = {"version": MANIFEST_VERSION, "cases": [case_to_dict(c) for c in cases]}
    Path(path).write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def resolve_reference_paths(cases: list[EvalCase], base_dir: str | Path) -> list[EvalCase]:
    """Resolve relative image handles against the manifest's directory.

    URLs and absolute paths pass through unchanged. Manifests stay
    diff-friendly on disk; resolution happens only at evaluation time.
    """
    base = Path(base_dir)
    out = []
    for case in cases:
        handles = tuple(
            h if h.startswith(("http://", "https://")) or Path(h).is_absolute() else str(base / h)
            for h in case.reference_images
        )
        out.append(replace(case, reference_images=handles))
    return out


@dataclass(frozen=True)
class TaskStatistics:
    cases: int = 0
    two_ref: int = 0
    three_ref: int = 0
    other_ref: int = 0


def dataset_statistics(cases: list[EvalCase]) -> dict[TaskKind, TaskStatistics]:
    """Per-task case counts split by reference-image count."""
    stats = {task: TaskStatistics() for task in TaskKind}
    for case in cases:
        prev = stats[case.task]
        n = len(case.reference_images)
        stats[case.task] = replace(
            prev,
            cases=prev.cases + 1,
            two_ref=prev.two_ref + (n == 2),
            three_ref=prev.three_ref + (n == 3),
            other_ref=prev.other_ref + (n not in (2, 3)),
        )
    return stats
