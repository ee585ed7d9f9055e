"""Acceptance suite: one test per exit criterion, at its stated tolerance.

Each test prints a single PASS line on success (visible with ``pytest -s``
or in the captured output); a failure shows up as a normal pytest failure.
"""

import itertools
import json
import time

import numpy as np
import pytest

from dareval.cases import load_manifest, save_manifest
from dareval.cli import main
from dareval.exceptions import ManifestError
from dareval.rebalance import (
    RebalanceConfig,
    aggregate_scores,
    attention_logits,
    baseline_attention,
    probe_attention,
    rebalance_pipeline,
    sample_query_indices,
)
from dareval.reporting import compare_reports, model_report
from dareval.scoring import Verdict, case_score, story_score
from dareval.cases import TaskKind
from dareval.tensors import HeadedTensor

from conftest import FIXTURES, make_case, random_key_segments, random_tensor
from test_scoring import brute_force_case


def _report(name: str) -> None:
    print(f"ACCEPTANCE PASS: {name}")


def _random_instance(rng):
    n_queries = int(rng.integers(1, 11))
    n_keys = int(rng.integers(2, 15))
    heads = int(rng.integers(1, 4))
    dim = int(rng.integers(1, 7))
    queries = random_tensor(rng, n_queries, heads, dim)
    keys = random_tensor(rng, n_keys, heads, dim)
    segments = random_key_segments(rng, n_keys)
    return queries, keys, segments


def test_criterion_1_gamma_zero_identity():
    """200 randomized instances: gamma=0 output equals baseline within 1e-12."""
    rng = np.random.default_rng(2024)
    start = time.monotonic()
    worst = 0.0
    for _ in range(200):
        queries, keys, segments = _random_instance(rng)
        cfg = RebalanceConfig(gamma=0.0, m=int(rng.integers(2, 65)))
        adjusted, _ = rebalance_pipeline(queries, keys, segments, cfg)
        base = baseline_attention(queries, keys)
        worst = max(worst, float(np.max(np.abs(adjusted.weights - base.weights))))
    elapsed = time.monotonic() - start
    assert worst <= 1e-12, f"max elementwise gap {worst}"
    assert elapsed < 5.0, f"took {elapsed:.2f}s"
    _report(f"1 gamma-zero identity (max gap {worst:.1e}, {elapsed:.2f}s)")


def test_criterion_2_logit_scaling_law():
    """200 randomized instances over the gamma ablation grid: adjusted
    logits equal w (.) baseline logits within 1e-10."""
    rng = np.random.default_rng(2025)
    gammas = [0.05, 0.15, 0.25, 0.35, 0.55]
    worst = 0.0
    for trial in range(200):
        queries, keys, segments = _random_instance(rng)
        cfg = RebalanceConfig(gamma=gammas[trial % len(gammas)], m=8)
        _, stats = rebalance_pipeline(queries, keys, segments, cfg)
        w = stats.weights
        # independent baseline logits, computed here rather than by the kernel
        scale = 1.0 / np.sqrt(queries.head_dim)
        oracle_logits = np.einsum("qhd,khd->qhk", queries.data, keys.data) * scale
        adjusted = attention_logits(queries, HeadedTensor(keys.data * w[:, None, None]))
        gap = float(np.max(np.abs(adjusted - oracle_logits * w[None, None, :])))
        worst = max(worst, gap)
    assert worst <= 1e-10, f"max logit gap {worst}"
    _report(f"2 logit-scaling law (max gap {worst:.1e})")


def test_criterion_3_sampling_oracle():
    """All (L_q <= 32, m <= L_q) match the index formula; m = L_q
    reproduces full-query statistics exactly."""
    for n_queries in range(1, 33):
        if n_queries == 1:
            assert sample_query_indices(1, 2) == [0]
            continue
        for m in range(2, n_queries + 1):
            raw = [i * (n_queries - 1) // (m - 1) for i in range(m)]
            expected = sorted(set(raw))
            assert sample_query_indices(n_queries, m) == expected, (n_queries, m)

    rng = np.random.default_rng(7)
    for n_queries in (2, 5, 17, 32):
        queries = random_tensor(rng, n_queries, 2, 4)
        keys = random_tensor(rng, 12, 2, 4)
        segments = random_key_segments(rng, 12)
        cfg = RebalanceConfig(m=n_queries)
        _, stats = rebalance_pipeline(queries, keys, segments, cfg)
        full = aggregate_scores(
            probe_attention(queries, keys.take_tokens(segments.reference_indices()))
        )
        assert np.array_equal(stats.raw_scores, full)
        assert stats.sampled_indices == tuple(range(n_queries))
    _report("3 sampling oracle (all L_q <= 32, full-sampling equivalence)")


def test_criterion_4_softmax_normalization():
    """Every attention row sums to 1 within 1e-9, including +-500 logits."""
    rng = np.random.default_rng(11)
    for _ in range(60):
        queries, keys, segments = _random_instance(rng)
        adjusted, _ = rebalance_pipeline(queries, keys, segments, RebalanceConfig(m=4))
        sums = adjusted.weights.sum(axis=-1)
        assert np.allclose(sums, 1.0, atol=1e-9)

    # explicit extreme logits: dim 1, scale 1 -> logits exactly +-500
    queries = HeadedTensor(np.array([[[500.0]], [[-500.0]]]))
    keys = HeadedTensor(np.array([[[1.0]], [[-1.0]], [[0.5]]]))
    probe = probe_attention(queries, keys)
    assert np.all(np.isfinite(probe.weights))
    assert np.allclose(probe.weights.sum(axis=-1), 1.0, atol=1e-9)

    # randomized huge-magnitude tensors
    for scale in (100.0, 500.0):
        big_q = HeadedTensor(rng.normal(scale=scale, size=(6, 2, 3)))
        big_k = HeadedTensor(rng.normal(scale=scale, size=(8, 2, 3)))
        attn = baseline_attention(big_q, big_k)
        assert np.all(np.isfinite(attn.weights))
        assert np.allclose(attn.weights.sum(axis=-1), 1.0, atol=1e-9)
    _report("4 softmax row normalization under extreme logits")


def _size_configs(max_total: int = 13):
    # every multiset of dimension sizes from {2,3,4}, 1..6 dimensions;
    # the per-config total is capped so full 2^total enumeration stays
    # inside the runtime budget (6 size-4 dimensions alone would be 2^24)
    for k in range(1, 7):
        for sizes in itertools.combinations_with_replacement((2, 3, 4), k):
            if sum(sizes) <= max_total:
                yield sizes


def test_criterion_5_scoring_oracle_exhaustive():
    """Exhaustive pass/fail enumeration (dimension sizes 2-4, up to 6
    dimensions, capped at 13 checkpoints per configuration) matches the
    independent brute-force evaluator exactly. Runtime < 10 s."""
    start = time.monotonic()
    letters = "ABCDEG"
    checked = 0
    for sizes in _size_configs():
        sizes_map = {letters[i]: n for i, n in enumerate(sizes)}
        # hard position varies per dimension: dim index modulo its size
        case = make_case(sizes=sizes_map, hard_pos=0)
        groups = []
        rebuilt = []
        for d_index, letter in enumerate(sizes_map):
            dim = next(d for d in case.dimensions if d.letter == letter)
            cps = case.checkpoints_for(dim)
            hard_at = d_index % len(cps)
            cps = tuple(
                type(c)(c.id, c.dimension, c.question, hard=(i == hard_at))
                for i, c in enumerate(cps)
            )
            groups.append((cps, hard_at))
            rebuilt.extend(cps)
        case = type(case)(**{**case.__dict__, "checkpoints": tuple(rebuilt)})

        total = sum(sizes)
        for bits in range(2 ** total):
            flags = [(bits >> i) & 1 == 1 for i in range(total)]
            verdicts = [
                Verdict(cp.id, flag) for cp, flag in zip(case.checkpoints, flags)
            ]
            offset = 0
            dims = []
            for cps, hard_at in groups:
                dims.append((flags[offset : offset + len(cps)], hard_at))
                offset += len(cps)
            expected = brute_force_case(dims)
            assert case_score(case, verdicts).final == expected, (sizes, bits)
            checked += 1
    elapsed = time.monotonic() - start
    assert elapsed < 10.0, f"took {elapsed:.2f}s"
    _report(f"5 scoring oracle ({checked} assignments exhaustively, {elapsed:.2f}s)")


def test_criterion_6_hybrid_weights_grid():
    """story_score reproduces the 0.4/0.6 affine blend on a 11x11 grid, exactly."""
    grid = [10.0 * i for i in range(11)]
    checked = 0
    for a, b in itertools.product(grid, grid):
        assert story_score(a, b) == 0.4 * a + 0.6 * b
        checked += 1
    assert checked == 121
    _report("6 hybrid story weights on the 121-pair grid")


def _run_cli_eval(tmp_path, generated_dir, stub_fixtures, extra=()):
    out = tmp_path / f"out_{len(list(tmp_path.iterdir()))}"
    code = main([
        "evaluate",
        str(FIXTURES / "manifest_12.json"),
        str(generated_dir),
        "--out", str(out),
        "--stub",
        "--stub-fixtures", str(stub_fixtures),
        *extra,
    ])
    assert code == 0
    return out


def test_criterion_7_end_to_end_determinism(tmp_path, generated_dir, stub_fixtures_path):
    """cmd_evaluate --stub --runs 5 on the 12-case fixture: zero discrepancy."""
    out = _run_cli_eval(tmp_path, generated_dir, stub_fixtures_path, extra=["--runs", "5"])
    stability = json.loads((out / "stability.json").read_text())
    assert len(stability["run_scores"]) == 5
    assert stability["max_discrepancy"] == 0.0
    assert len(set(stability["run_scores"])) == 1
    _report("7 end-to-end stub determinism over 5 runs (discrepancy 0)")


def test_criterion_8_injected_failure_arithmetic(tmp_path, generated_dir, stub_fixtures_path):
    """One hard-checkpoint failure in a 3-checkpoint dimension of a
    5-dimension case moves that case by exactly 12.00 points."""
    baseline_out = _run_cli_eval(tmp_path, generated_dir, stub_fixtures_path)
    baseline = json.loads((baseline_out / "report.json").read_text())
    base_final = next(c["final"] for c in baseline["per_case"] if c["case_id"] == "object_001")

    fixtures = json.loads(stub_fixtures_path.read_text())
    fixtures["verdicts"]["object_001"]["B_check_1"] = {"pass": False, "why": "injected"}
    injected_path = tmp_path / "stub_injected.json"
    injected_path.write_text(json.dumps(fixtures))

    injected_out = _run_cli_eval(tmp_path, generated_dir, injected_path)
    injected = json.loads((injected_out / "report.json").read_text())
    new_final = next(c["final"] for c in injected["per_case"] if c["case_id"] == "object_001")

    delta = base_final - new_final
    assert abs(delta - 12.0) < 1e-9, f"case moved by {delta}"
    assert round(delta, 2) == 12.00
    _report(f"8 injected hard failure moves the case by {delta:.2f} points")


def test_criterion_9_report_arithmetic():
    """Published baseline vs +rebalance rows: average delta +2.76 +- 0.01."""
    rows = json.loads((FIXTURES / "reference_rows.json").read_text())
    reports = {}
    for name, row in rows.items():
        per_task = {TaskKind(k): v for k, v in row["per_task"].items()}
        reports[name] = model_report(name, per_task, stated_avg=row["avg"])
    delta = compare_reports(reports["BAGEL"], reports["BAGEL+DAR"])
    assert delta.avg == pytest.approx(2.76, abs=0.01)
    _report(f"9 report arithmetic (avg delta {delta.avg:+.2f})")


def test_criterion_10_manifest_round_trip(tmp_path):
    """load -> save -> load identity; structural rules enforced by the
    targeted broken fixtures."""
    cases = load_manifest(FIXTURES / "manifest_12.json")
    saved = tmp_path / "copy.json"
    save_manifest(saved, cases)
    assert load_manifest(saved) == cases
    resaved = tmp_path / "copy2.json"
    save_manifest(resaved, load_manifest(saved))
    assert resaved.read_bytes() == saved.read_bytes()

    broken = {
        "five_checkpoints_in_dimension.json": "5 checkpoints",
        "two_hard_checkpoints.json": "2 hard checkpoints",
        "duplicate_checkpoint_ids.json": "duplicate checkpoint ids",
        "story_without_answer_set.json": "answer_set",
        "illegal_reference_count.json": "reference images",
    }
    for name, needle in broken.items():
        with pytest.raises(ManifestError, match=needle):
            load_manifest(FIXTURES / "broken" / name)
    _report("10 manifest round-trip identity and structural enforcement")
