"""Prompt-template filling and case-skeleton synthesis.

Templates live in ``data/templates.json`` as plain data (one variant per
legal reference count) so they can be swapped without touching code. The
synthesizer samples element pools with a seeded RNG and emits manifest
skeletons: instruction and reference prompts filled in, checkpoints left
empty for later authoring or judge generation.
"""

from __future__ import annotations

import json
import random
import string
from importlib import resources
from pathlib import Path

from .cases import ElementPools, EvalCase, StoryAnswerSet, TaskKind
from .exceptions import TemplateError

_formatter = string.Formatter()


def load_templates(path: str | Path | None = None) -> dict:
    if path is not None:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    return json.loads(resources.files("dareval.data").joinpath("templates.json").read_text("utf-8"))


def template_placeholders(template: str) -> list[str]:
    return [fname for _, fname, _, _ in _formatter.parse(template) if fname]


def _fill(template: str, elements: dict[str, str]) -> str:
    for name in template_placeholders(template):
        if name not in elements:
            raise TemplateError(f"missing value for placeholder {name!r}")
    return template.format(**elements)


def _variant(task: TaskKind, ref_count: int, templates: dict) -> dict:
    variants = templates.get(task.value)
    if not variants:
        raise TemplateError(f"no templates for task {task.value}")
    for v in variants:
        if v["ref_count"] == ref_count:
            return v
    legal = sorted(v["ref_count"] for v in variants)
    raise TemplateError(f"task {task.value} has no template for {ref_count} references (legal: {legal})")


def fill_template(
    task: TaskKind,
    elements: dict[str, str],
    ref_count: int,
    templates: dict | None = None,
) -> tuple[list[str], str]:
    """Fill the (task, ref_count) template variant from a flat element map.

    Returns (reference_prompts, task_prompt). Raises TemplateError naming
    the first placeholder with no value.
    """
    data = templates if templates is not None else load_templates()
    variant = _variant(task, ref_count, data)
    reference_prompts = [_fill(t, elements) for t in variant["reference_prompts"]]
    task_prompt = _fill(variant["task_prompt"], elements)
    return reference_prompts, task_prompt


def _sample_elements(task: TaskKind, ref_count: int, pools: ElementPools, rng: random.Random) -> dict[str, str]:
    if task in (TaskKind.OBJECT_COMPOSITION, TaskKind.SPATIAL_COMPOSITION, TaskKind.FG_BG_COMPOSITION):
        pools.require("objects", "scenes")
        objs = rng.sample(pools.objects, ref_count)
        e = {"chosen_scene": rng.choice(pools.scenes)}
        for label, obj in zip("abc", objs):
            e[f"obj_{label}"] = obj
            e[f"scene_{label}"] = rng.choice(pools.scenes)
        if task is TaskKind.SPATIAL_COMPOSITION:
            pools.require("spatial_relations")
            e["spatial_relation"] = rng.choice(pools.spatial_relations)
            if ref_count == 3:
                left, center, right = rng.sample(objs, 3)
                e.update(left_obj=left, center_obj=center, right_obj=right)
        return e

    if task is TaskKind.ATTRIBUTE_DISENTANGLEMENT:
        pools.require("objects", "scenes", "styles")
        subject, style_object = rng.sample(pools.objects, 2)
        return {
            "personalized_description": subject,
            "main_object": subject,
            "background_desc": rng.choice(pools.scenes),
            "style_object": style_object,
            "style_desc": rng.choice(pools.styles),
            "specific_background": rng.choice(pools.scenes),
        }

    if task is TaskKind.COMPONENT_TRANSFER:
        pools.require("objects", "scenes", "clothing", "accessories")
        if ref_count == 2:
            subj_a, subj_b = rng.sample(pools.objects, 2)
            acc_a = rng.choice(pools.accessories)
            return {
                "subject_a": subj_a,
                "subject_b": subj_b,
                "scene_a": rng.choice(pools.scenes),
                "scene_b": rng.choice(pools.scenes),
                "clothing_a": rng.choice(pools.clothing),
                "clothing_b": rng.choice(pools.clothing),
                "accessories_a": acc_a,
                "accessories_b": rng.choice(pools.accessories),
                "local_element": acc_a,
            }
        pools.require("spatial_relations")
        subj1, subj2, subj_b, subj_c = rng.sample(pools.objects, 4)
        cloth1 = rng.choice(pools.clothing)
        acc1 = rng.choice(pools.accessories)
        return {
            "subject1_type": subj1,
            "subject2_type": subj2,
            "subject_b": subj_b,
            "subject_c": subj_c,
            "position1": rng.choice(pools.spatial_relations),
            "position2": rng.choice(pools.spatial_relations),
            "cloth1": cloth1,
            "cloth2": rng.choice(pools.clothing),
            "acc1": acc1,
            "acc2": rng.choice(pools.accessories),
            "scene_a": rng.choice(pools.scenes),
            "scene_b": rng.choice(pools.scenes),
            "scene_c": rng.choice(pools.scenes),
            "clothing_b": rng.choice(pools.clothing),
            "clothing_c": rng.choice(pools.clothing),
            "accessories_b": rng.choice(pools.accessories),
            "accessories_c": rng.choice(pools.accessories),
            "elements_desc": f"the {acc1} and the {cloth1}",
            "source_desc": f"the {subj1}",
            "source_label": "A",
            "target_desc": f"the {subj_b}",
            "target_label": "B",
        }

    if task is TaskKind.STORY_GENERATION:
        pools.require("objects", "scenes")
        subject = rng.choice(pools.objects)
        scene = rng.choice(pools.scenes)
        return {"_story_subject": subject, "_story_scene": scene}

    raise TemplateError(f"no element sampler for task {task.value}")


def synthesize_cases(
    task: TaskKind,
    pools: ElementPools,
    count: int,
    seed: int,
    templates: dict | None = None,
) -> list[EvalCase]:
    """Deterministic case skeletons for one task.

    Reference counts rotate over the template variants present for the
    task; image handles are placeholder paths to be filled once images
    exist. Story skeletons get a placeholder answer set to satisfy the
    schema; annotators are expected to rewrite it.
    """
    data = templates if templates is not None else load_templates()
    variants = data.get(task.value)
    if not variants:
        raise TemplateError(f"no templates for task {task.value}")
    rng = random.Random(seed)
    out = []
    for i in range(count):
        ref_count = variants[i % len(variants)]["ref_count"]
        elements = _sample_elements(task, ref_count, pools, rng)
        ref_prompts, task_prompt = fill_template(task, elements, ref_count, data)
        case_id = f"{task.value}_{seed:04d}_{i:04d}"
        answer_set = None
        if task is TaskKind.STORY_GENERATION:
            subject = elements["_story_subject"]
            scene = elements["_story_scene"]
            answer_set = StoryAnswerSet(
                narrative=f"PLACEHOLDER: a short story about {subject} in {scene}.",
                likely_outcomes=(f"PLACEHOLDER: what {subject} most plausibly does next.",),
                counterfactuals=(f"PLACEHOLDER: an implausible continuation for {subject}.",),
            )
        out.append(
            EvalCase(
                case_id=case_id,
                task=task,
                instruction=task_prompt,
                reference_images=tuple(
                    f"images/{case_id}_ref{j + 1}.png" for j in range(ref_count)
                ),
                checkpoints=(),
                answer_set=answer_set,
                reference_prompts=tuple(ref_prompts),
            )
        )
    return out
