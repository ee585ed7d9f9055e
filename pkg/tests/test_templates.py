import itertools

import pytest

from dareval.cases import ElementPools, TaskKind, validate_case
from dareval.exceptions import TemplateError
from dareval.templates import fill_template, load_templates, synthesize_cases, template_placeholders

POOLS = ElementPools(
    objects=("giraffe", "wooden chair", "copper kettle", "husky dog", "street musician"),
    scenes=("a sunny park", "a cozy study", "a mountain lake"),
    styles=("watercolor painting", "film noir"),
    spatial_relations=("left", "right"),
    clothing=("denim jacket", "wool coat"),
    accessories=("red scarf", "straw hat"),
)


class TestFillTemplate:
    def test_object_two_refs(self):
        refs, task = fill_template(
            TaskKind.OBJECT_COMPOSITION,
            {
                "obj_a": "giraffe",
                "obj_b": "wooden chair",
                "scene_a": "a zoo enclosure",
                "scene_b": "a workshop",
                "chosen_scene": "a sunny park",
            },
            ref_count=2,
        )
        assert task == (
            "Generate an image that contains both the complete giraffe and "
            "wooden chair together in a sunny park."
        )
        assert refs == [
            "A photo of giraffe in a zoo enclosure.",
            "A photo of wooden chair in a workshop.",
        ]
        # every sampled object appears exactly once in the task prompt
        assert task.count("giraffe") == 1
        assert task.count("wooden chair") == 1

    def test_spatial_three_refs_mentions_positions(self):
        elements = {
            "obj_a": "teapot", "obj_b": "book", "obj_c": "fern",
            "scene_a": "s1", "scene_b": "s2", "scene_c": "s3",
            "chosen_scene": "a kitchen",
            "left_obj": "teapot", "center_obj": "book", "right_obj": "fern",
        }
        _, task = fill_template(TaskKind.SPATIAL_COMPOSITION, elements, ref_count=3)
        assert "with teapot on the left, book in the center, and fern on the right." in task

    def test_missing_placeholder_named(self):
        with pytest.raises(TemplateError, match="chosen_scene"):
            fill_template(
                TaskKind.OBJECT_COMPOSITION,
                {"obj_a": "x", "obj_b": "y", "scene_a": "s", "scene_b": "s"},
                ref_count=2,
            )

    def test_illegal_ref_count(self):
        with pytest.raises(TemplateError, match="legal"):
            fill_template(TaskKind.FG_BG_COMPOSITION, {}, ref_count=3)

    def test_no_unfilled_placeholders_in_any_variant(self):
        templates = load_templates()
        for variants in templates.values():
            for variant in variants:
                for text in variant["reference_prompts"] + [variant["task_prompt"]]:
                    names = template_placeholders(text)
                    filled = text.format(**{n: "x" for n in names})
                    assert "{" not in filled and "}" not in filled

    def test_injective_over_pool_product(self):
        outputs = set()
        combos = list(itertools.product(POOLS.objects[:3], POOLS.objects[:3], POOLS.scenes))
        combos = [(a, b, s) for a, b, s in combos if a != b]
        for obj_a, obj_b, scene in combos:
            refs, task = fill_template(
                TaskKind.OBJECT_COMPOSITION,
                {
                    "obj_a": obj_a, "obj_b": obj_b,
                    "scene_a": scene, "scene_b": scene, "chosen_scene": scene,
                },
                ref_count=2,
            )
            outputs.add((tuple(refs), task))
        assert len(outputs) == len(combos)


class TestSynthesize:
    def test_deterministic_for_fixed_seed(self, tmp_path):
        a = synthesize_cases(TaskKind.OBJECT_COMPOSITION, POOLS, count=6, seed=7)
        b = synthesize_cases(TaskKind.OBJECT_COMPOSITION, POOLS, count=6, seed=7)
        assert a == b
        c = synthesize_cases(TaskKind.OBJECT_COMPOSITION, POOLS, count=6, seed=8)
        assert a != c

    def test_object_counts_legal(self):
        cases = synthesize_cases(TaskKind.OBJECT_COMPOSITION, POOLS, count=10, seed=3)
        assert len(cases) == 10
        assert all(len(c.reference_images) in (2, 3) for c in cases)
        assert all(validate_case(c, allow_empty_checkpoints=True) == [] for c in cases)

    def test_skeletons_carry_prompts_not_checkpoints(self):
        cases = synthesize_cases(TaskKind.SPATIAL_COMPOSITION, POOLS, count=4, seed=1)
        for case in cases:
            assert case.checkpoints == ()
            assert case.reference_prompts
            assert case.instruction

    def test_story_skeletons_have_placeholder_answer_sets(self):
        cases = synthesize_cases(TaskKind.STORY_GENERATION, POOLS, count=2, seed=5)
        for case in cases:
            assert case.answer_set is not None
            assert case.answer_set.likely_outcomes

    def test_missing_pool_named(self):
        with pytest.raises(TemplateError):
            fill_template(TaskKind.OBJECT_COMPOSITION, {}, ref_count=2)
        empty = ElementPools(objects=("a", "b"))
        with pytest.raises(Exception, match="scenes"):
            synthesize_cases(TaskKind.OBJECT_COMPOSITION, empty, count=1, seed=1)

    def test_component_both_modes(self):
        cases = synthesize_cases(TaskKind.COMPONENT_TRANSFER, POOLS, count=4, seed=11)
        counts = {len(c.reference_images) for c in cases}
        assert counts == {2, 3}
        for case in cases:
            assert validate_case(case, allow_empty_checkpoints=True) == []
