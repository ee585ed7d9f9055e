from __future__ import annotations

import shutil
from pathlib import Path

import numpy as np
import pytest

from dareval.cases import Checkpoint, EvalCase, EvalDimension, StoryAnswerSet, TaskKind
from dareval.tensors import HeadedTensor, KeySegments, Segment

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def manifest_path() -> Path:
    return FIXTURES / "manifest_12.json"


@pytest.fixture(scope="session")
def stub_fixtures_path() -> Path:
    return FIXTURES / "stub_allpass.json"


@pytest.fixture()
def generated_dir(tmp_path) -> Path:
    """Copy of the generated-image fixtures, safe to mutate per test."""
    dest = tmp_path / "generated"
    shutil.copytree(FIXTURES / "generated", dest)
    return dest


def random_tensor(rng: np.random.Generator, tokens: int, heads: int, dim: int, scale: float = 1.0) -> HeadedTensor:
    return HeadedTensor(rng.normal(scale=scale, size=(tokens, heads, dim)))


def random_key_segments(rng: np.random.Generator, n_tokens: int) -> KeySegments:
    """Random contiguous cover with at least one reference segment."""
    cuts = sorted(rng.choice(np.arange(1, n_tokens), size=min(3, n_tokens - 1), replace=False).tolist())
    bounds = [0] + cuts + [n_tokens]
    kinds = ["text", "reference_image", "noise", "reference_image"]
    segments = []
    ref_index = 0
    for i in range(len(bounds) - 1):
        kind = kinds[i % len(kinds)]
        if i == len(bounds) - 2 and ref_index == 0:
            kind = "reference_image"  # guarantee one reference segment
        index = None
        if kind == "reference_image":
            index = ref_index
            ref_index += 1
        segments.append(Segment(kind=kind, start=bounds[i], length=bounds[i + 1] - bounds[i], index=index))
    return KeySegments(tuple(segments))


def make_checkpoints(sizes: dict[str, int], hard_pos: int = 0) -> tuple[Checkpoint, ...]:
    """One dimension per letter with the given checkpoint count."""
    out = []
    for letter, count in sizes.items():
        for n in range(count):
            out.append(
                Checkpoint(
                    id=f"{letter}_check_{n + 1}",
                    dimension=EvalDimension(letter),
                    question=f"condition {n + 1} for {letter}",
                    hard=(n == hard_pos % count),
                )
            )
    return tuple(out)


def make_case(
    case_id: str = "case_x",
    task: TaskKind = TaskKind.OBJECT_COMPOSITION,
    sizes: dict[str, int] | None = None,
    hard_pos: int = 0,
) -> EvalCase:
    sizes = sizes if sizes is not None else {"A": 2, "B": 2, "C": 2, "D": 2, "G": 2}
    answer_set = None
    if task is TaskKind.STORY_GENERATION:
        answer_set = StoryAnswerSet(narrative="n", likely_outcomes=("o1",), counterfactuals=())
    refs = {"attribute_disentanglement": 3}.get(task.value, 2)
    return EvalCase(
        case_id=case_id,
        task=task,
        instruction="do the thing",
        reference_images=tuple(f"images/{case_id}_ref{i}.png" for i in range(refs)),
        checkpoints=make_checkpoints(sizes, hard_pos=hard_pos),
        answer_set=answer_set,
        active_dimensions=tuple(EvalDimension(letter) for letter in sizes),
    )
