#!/usr/bin/env python3
"""Regenerate the authored test fixtures under tests/fixtures/.

Writes the 12-case manifest (two cases per task), the all-pass stub reply
file, placeholder reference/generated images, and a set of deliberately
broken manifests used by the validation tests. Output is deterministic, so
reruns leave the tree unchanged.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from dareval.cases import (  # noqa: E402
    Checkpoint,
    EvalCase,
    EvalDimension,
    StoryAnswerSet,
    TaskKind,
    case_to_dict,
    save_manifest,
)

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"

# 1x1 transparent PNG
PNG_BYTES = bytes.fromhex(
    "89504e470d0a1a0a0000000d49484452000000010000000108060000001f15c489"
    "0000000d49444154789c63fcffff3f0005fe02fea73581840000000049454e44ae426082"
)

OBJECT_CHECKLIST = [
    ("A_check_1", "A", "Does the image contain all specified objects as required by the instructions?", True),
    ("A_check_2", "A", "Are the relative arrangement and requested relations between objects correctly followed?", False),
    ("A_check_3", "A", "Are there no obviously extra or missing salient elements?", False),
    ("B_check_1", "B", "Does each object's identity strictly match its reference (e.g., category, instance)?", True),
    ("B_check_2", "B", "Are the key attributes (e.g., color, texture, shape) of each object well preserved?", False),
    ("B_check_3", "B", "Are the object details accurate and easily recognizable?", False),
    ("C_check_1", "C", "Are the spatial relationships between objects consistent with the instructions and physically plausible?", True),
    ("C_check_2", "C", "Are the relative sizes, proportions, and perspective of objects realistic?", False),
    ("D_check_1", "D", "Are objects from different reference images integrated without conflicts or contradictions?", True),
    ("D_check_2", "D", "Are style, lighting, and background consistent across composed objects?", False),
    ("G_check_1", "G", "Does the final scene appear natural, coherent, and visually plausible?", True),
    ("G_check_2", "G", "Are lighting, shadows, and global aesthetics of sufficient quality for practical use?", False),
]

GENERIC_QUESTIONS = {
    "A": "Does the generated image satisfy requirement {n} of the instruction?",
    "B": "Does subject {n} keep the identity shown in its reference image?",
    "C": "Is spatial relation {n} rendered plausibly and as instructed?",
    "D": "Is reference pair {n} integrated without contradiction?",
    "E": "Is causal step {n} of the story continuation believable?",
    "G": "Is quality aspect {n} (coherence, lighting) acceptable for use?",
}


def checklist(letters: str, count: int = 2) -> list[Checkpoint]:
    out = []
    for letter in letters:
        for n in range(1, count + 1):
            out.append(
                Checkpoint(
                    id=f"{letter}_check_{n}",
                    dimension=EvalDimension(letter),
                    question=GENERIC_QUESTIONS[letter].format(n=n),
                    hard=(n == 1),
                )
            )
    return out


def object_checklist() -> list[Checkpoint]:
    return [
        Checkpoint(id=cid, dimension=EvalDimension(dim), question=q, hard=hard)
        for cid, dim, q, hard in OBJECT_CHECKLIST
    ]


def refs(case_id: str, n: int) -> tuple[str, ...]:
    return tuple(f"images/{case_id}_ref{i + 1}.png" for i in range(n))


def build_cases() -> list[EvalCase]:
    cases = [
        EvalCase(
            case_id="object_001",
            task=TaskKind.OBJECT_COMPOSITION,
            instruction="Generate an image that contains both the complete giraffe and wooden chair together in a sunny park.",
            reference_images=refs("object_001", 2),
            checkpoints=tuple(object_checklist()),
        ),
        EvalCase(
            case_id="object_002",
            task=TaskKind.OBJECT_COMPOSITION,
            instruction="Generate an image that contains all three objects (red bicycle, tabby cat, and oak barrel) together in a cobblestone courtyard.",
            reference_images=refs("object_002", 3),
            checkpoints=tuple(checklist("ABCDG")),
        ),
        EvalCase(
            case_id="spatial_001",
            task=TaskKind.SPATIAL_COMPOSITION,
            instruction="Generate an image that contains both the complete vintage lamp and leather armchair together in a cozy study, with vintage lamp positioned to the left of leather armchair.",
            reference_images=refs("spatial_001", 2),
            checkpoints=tuple(checklist("ABCDG")),
        ),
        EvalCase(
            case_id="spatial_002",
            task=TaskKind.SPATIAL_COMPOSITION,
            instruction="Generate an image that contains all three objects (clay teapot, stack of books, and potted fern) together in a sunlit kitchen, with clay teapot on the left, stack of books in the center, and potted fern on the right.",
            reference_images=refs("spatial_002", 3),
            checkpoints=tuple(checklist("ABCDG")),
        ),
        EvalCase(
            case_id="attribute_001",
            task=TaskKind.ATTRIBUTE_DISENTANGLEMENT,
            instruction="Generate an image of the husky dog from image A, using the visual style from image B, and placing it in the mountain lake environment from image C.",
            reference_images=refs("attribute_001", 3),
            checkpoints=tuple(checklist("ABCDG")),
        ),
        EvalCase(
            case_id="attribute_002",
            task=TaskKind.ATTRIBUTE_DISENTANGLEMENT,
            instruction="Generate an image of the copper kettle from image A, using the visual style from image B, and placing it in the autumn forest environment from image C.",
            reference_images=refs("attribute_002", 3),
            checkpoints=tuple(checklist("ABCDG")),
        ),
        EvalCase(
            case_id="component_001",
            task=TaskKind.COMPONENT_TRANSFER,
            instruction="Task: Extract only the red scarf from the subject in Image A, then apply this element to the subject in Image B. Create a new composition showing the target subject wearing/displaying the red scarf.",
            reference_images=refs("component_001", 2),
            checkpoints=tuple(checklist("ABCDG")),
        ),
        EvalCase(
            case_id="component_002",
            task=TaskKind.COMPONENT_TRANSFER,
            instruction="Extract the straw hat and the denim jacket from the gardener in Image A, then apply these elements to the street musician in Image B. Create a new composition showing the target subject(s) wearing/displaying the transferred elements.",
            reference_images=refs("component_002", 3),
            checkpoints=tuple(checklist("ABCDG")),
        ),
        EvalCase(
            case_id="fgbg_001",
            task=TaskKind.FG_BG_COMPOSITION,
            instruction="Generate an image where you cleanly extract the golden retriever from image A and replace the park bench in image B. The background from image B should remain unchanged.",
            reference_images=refs("fgbg_001", 2),
            checkpoints=tuple(checklist("ABCDG")),
        ),
        EvalCase(
            case_id="fgbg_002",
            task=TaskKind.FG_BG_COMPOSITION,
            instruction="Generate an image where you cleanly extract the sailboat from image A and replace the rowing boat in image B. The background from image B should remain unchanged.",
            reference_images=refs("fgbg_002", 2),
            checkpoints=tuple(checklist("ABCDG")),
        ),
        EvalCase(
            case_id="story_001",
            task=TaskKind.STORY_GENERATION,
            instruction="Given the reference images, infer and generate a realistic photo of what might happen next.",
            reference_images=refs("story_001", 2),
            checkpoints=tuple(checklist("ABCDEG")),
            answer_set=StoryAnswerSet(
                narrative="A lit candle stands by an open window as the wind picks up.",
                likely_outcomes=(
                    "The candle flame is blown out and a thin smoke trail rises.",
                    "The curtain sways over the extinguished candle.",
                ),
                counterfactuals=("The candle burns underwater.",),
            ),
        ),
        EvalCase(
            case_id="story_002",
            task=TaskKind.STORY_GENERATION,
            instruction="Given the reference images, infer and generate a realistic photo of what might happen next.",
            reference_images=refs("story_002", 3),
            checkpoints=tuple(checklist("ABCDEG")),
            answer_set=StoryAnswerSet(
                narrative="A child rolls a snowball that grows larger across the yard.",
                likely_outcomes=(
                    "The snowball becomes the base of a snowman.",
                    "The child stacks a second ball on top of the first.",
                ),
                counterfactuals=("The snowball melts instantly on fresh snow.",),
            ),
        ),
    ]
    return cases


def write_stub_allpass(cases: list[EvalCase], path: Path) -> None:
    fixtures = {
        "verdicts": {
            case.case_id: {
                cp.id: {"pass": True, "why": "authored all-pass fixture"} for cp in case.checkpoints
            }
            for case in cases
        },
        "answer_scores": {
            case.case_id: 10 for case in cases if case.task is TaskKind.STORY_GENERATION
        },
    }
    path.write_text(json.dumps(fixtures, indent=2) + "\n", encoding="utf-8")


def write_broken_manifests(cases: list[EvalCase], out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)

    def dump(name: str, payload) -> None:
        (out_dir / name).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    base = case_to_dict(cases[0])

    five = json.loads(json.dumps(base))
    five["checkpoints"] = [c for c in five["checkpoints"]] + [
        {"id": "A_check_4", "dimension": "A", "question": "extra", "hard": False},
        {"id": "A_check_5", "dimension": "A", "question": "extra", "hard": False},
    ]
    dump("five_checkpoints_in_dimension.json", {"version": 1, "cases": [five]})

    two_hard = json.loads(json.dumps(base))
    two_hard["checkpoints"][1]["hard"] = True  # A_check_2 joins A_check_1
    dump("two_hard_checkpoints.json", {"version": 1, "cases": [two_hard]})

    dup = json.loads(json.dumps(base))
    dup["checkpoints"][1]["id"] = "A_check_1"
    dump("duplicate_checkpoint_ids.json", {"version": 1, "cases": [dup]})

    story = case_to_dict(cases[10])
    story.pop("answer_set")
    dump("story_without_answer_set.json", {"version": 1, "cases": [story]})

    bad_refs = json.loads(json.dumps(base))
    bad_refs["reference_images"] = bad_refs["reference_images"][:1]
    dump("illegal_reference_count.json", {"version": 1, "cases": [bad_refs]})

    (out_dir / "not_json.json").write_text('{"version": 1, "cases": [\n', encoding="utf-8")


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    cases = build_cases()
    save_manifest(FIXTURES / "manifest_12.json", cases)
    write_stub_allpass(cases, FIXTURES / "stub_allpass.json")
    write_broken_manifests(cases, FIXTURES / "broken")

    images = FIXTURES / "images"
    images.mkdir(exist_ok=True)
    for case in cases:
        for handle in case.reference_images:
            (FIXTURES / handle).write_bytes(PNG_BYTES)

    generated = FIXTURES / "generated"
    generated.mkdir(exist_ok=True)
    for case in cases:
        # distinct bytes per case so cache keys differ
        (generated / f"{case.case_id}.png").write_bytes(PNG_BYTES + case.case_id.encode())

    rows = {
        "BAGEL": {
            "per_task": {
                "object_composition": 87.64,
                "spatial_composition": 89.96,
                "attribute_disentanglement": 89.84,
                "component_transfer": 52.40,
                "fg_bg_composition": 64.64,
                "story_generation": 65.09,
            },
            "avg": 73.55,
        },
        "BAGEL+DAR": {
            "per_task": {
                "object_composition": 88.04,
                "spatial_composition": 91.88,
                "attribute_disentanglement": 90.76,
                "component_transfer": 56.06,
                "fg_bg_composition": 71.24,
                "story_generation": 66.34,
            },
            "avg": 76.31,
        },
    }
    (FIXTURES / "reference_rows.json").write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")

    print(f"fixtures written under {FIXTURES}")


if __name__ == "__main__":
    main()
