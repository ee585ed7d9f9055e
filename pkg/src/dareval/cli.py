"""Command-line entry point.

Subcommands: validate a manifest, synthesize case skeletons, generate
checkpoints via the judge, evaluate generated images against a manifest,
and run the attention-rebalancing demo on tensor fixtures.

Exit codes: 0 success, 1 data violation, 2 usage or I/O error,
3 judge transport failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .cases import (
    ElementPools,
    TaskKind,
    load_manifest,
    resolve_reference_paths,
    save_manifest,
    validate_case,
)
from .exceptions import (
    CoverageError,
    DarevalError,
    GenerationError,
    JudgeParseError,
    TransportError,
)
from .harness import MISSING_FATAL, MISSING_SKIP, evaluate_manifest
from .judge import HttpJudgeTransport, JudgeClient, JudgeConfig, StubJudgeTransport, VerdictCache
from .rebalance import (
    RebalanceConfig,
    baseline_attention,
    rebalance_pipeline,
    segment_attention_shares,
)
from .reporting import TASK_TITLES, emit_report, stability_check
from .templates import synthesize_cases
from .tensors import read_segments, read_tensor

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2
EXIT_TRANSPORT = 3


def _judge_config(args) -> JudgeConfig:
    overrides = {}
    if getattr(args, "judge_config", None):
        overrides.update(json.loads(Path(args.judge_config).read_text(encoding="utf-8")))
    overrides.pop("api_key", None)  # credentials come from the environment only
    if args.stub:
        overrides.setdefault("model_name", "stub")
        return JudgeConfig(**{k: v for k, v in overrides.items() if k != "base_url"})
    return JudgeConfig.from_env(**overrides)


def _judge_client(args, cfg: JudgeConfig, cache: VerdictCache | None) -> JudgeClient:
    if args.stub:
        transport = StubJudgeTransport(fixtures=args.stub_fixtures)
    else:
        transport = HttpJudgeTransport(cfg)
    return JudgeClient(cfg, transport=transport, cache=cache, transcript_path=getattr(args, "transcript", None))


def cmd_validate(args) -> int:
    try:
        cases = load_manifest(args.manifest, allow_empty_checkpoints=args.allow_empty_checkpoints)
    except DarevalError as exc:
        print(exc, file=sys.stderr)
        return EXIT_DATA
    print(f"{args.manifest}: {len(cases)} case(s), all valid")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cases = resolve_reference_paths(load_manifest(args.manifest), Path(args.manifest).parent)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = _judge_config(args)
    missing = MISSING_SKIP if args.missing == "skip" else MISSING_FATAL

    def run_once(cache_dir: Path | None):
        cache = VerdictCache(cache_dir) if cache_dir else None
        client = _judge_client(args, cfg, cache)
        return evaluate_manifest(
            cases,
            args.images_dir,
            client,
            model_name=args.model_name,
            cache=cache,
            missing=missing,
            per_checkpoint=args.per_checkpoint,
        )

    base_cache = Path(args.cache_dir) if args.cache_dir else None
    outcome = run_once(base_cache)
    report = outcome.report

    if args.runs and args.runs >= 2:
        # stability runs stay independent: no shared cache across runs
        def closure():
            return run_once(None).report

        stability = stability_check(closure, args.runs)
        (out_dir / "stability.json").write_text(
            json.dumps(
                {
                    "run_scores": list(stability.run_scores),
                    "max_discrepancy": stability.max_discrepancy,
                },
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
        print(f"stability over {args.runs} runs: max discrepancy {stability.max_discrepancy:.4f}")

    for fmt, name in (("json", "report.json"), ("csv", "report.csv"), ("markdown", "report.md")):
        (out_dir / name).write_bytes(emit_report(report, fmt))

    for task, score in sorted(report.per_task.items(), key=lambda kv: kv[0].value):
        print(f"{TASK_TITLES[task]:<12} {score:8.2f}")
    print(f"{'Avg. Score':<12} {report.avg:8.2f}")
    if outcome.skipped_cases:
        print(f"skipped (no generated image): {', '.join(outcome.skipped_cases)}", file=sys.stderr)
    print(f"reports written to {out_dir}")
    return EXIT_OK


def cmd_checkpoints(args) -> int:
    cases = load_manifest(args.manifest, allow_empty_checkpoints=True)
    resolved = resolve_reference_paths(cases, Path(args.manifest).parent)
    cfg = _judge_config(args)
    client = _judge_client(args, cfg, cache=None)
    filled = []
    for case, prompt_case in zip(cases, resolved):
        if case.checkpoints:
            filled.append(case)
            continue
        checkpoints = client.generate_checkpoints(prompt_case)
        case = type(case)(**{**case.__dict__, "checkpoints": tuple(checkpoints)})
        problems = validate_case(case)
        if problems:
            print("\n".join(problems), file=sys.stderr)
            return EXIT_DATA
        filled.append(case)
    save_manifest(args.out, filled)
    print(f"wrote {len(filled)} case(s) with checkpoints to {args.out}")
    return EXIT_OK


def cmd_dar_demo(args) -> int:
    fixture = Path(args.fixture_dir)
    queries = read_tensor(fixture / "queries.dart1")
    keys = read_tensor(fixture / "keys.dart1")
    segments = read_segments(fixture / "segments.json")
    cfg = RebalanceConfig(
        gamma=args.gamma,
        m=args.m,
        tau_high=args.tau_high,
        tau_low=args.tau_low,
        joint_normalization=not args.per_segment,
    )
    before = segment_attention_shares(baseline_attention(queries, keys), segments)
    adjusted, stats = rebalance_pipeline(queries, keys, segments, cfg)
    after = segment_attention_shares(adjusted, segments)

    print(f"{'segment':<24} {'before':>10} {'after':>10}")
    for label in before:
        print(f"{label:<24} {before[label]:>10.4f} {after[label]:>10.4f}")
    amplified = int((stats.weights > 1.0).sum())
    suppressed = int((stats.weights < 1.0).sum())
    print(f"tokens amplified: {amplified}, suppressed: {suppressed}, "
          f"sampled queries: {len(stats.sampled_indices)}")

    out = Path(args.out)
    out.write_text(stats.to_json() + "\n", encoding="utf-8")
    print(f"diagnostics written to {out}")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    task = TaskKind.from_value(args.task)
    pools = ElementPools.from_file(args.pools)
    cases = synthesize_cases(task, pools, count=args.count, seed=args.seed)
    save_manifest(args.out, cases)
    print(f"wrote {len(cases)} {task.value} skeleton(s) to {args.out}")
    return EXIT_OK


def _add_judge_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--stub", action="store_true", help="use the deterministic offline judge")
    p.add_argument("--stub-fixtures", default=None, help="canned stub replies (JSON file)")
    p.add_argument("--judge-config", default=None, help="judge settings JSON (credentials stay in env)")
    p.add_argument("--transcript", default=None, help="append request/response transcripts here (JSONL)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dareval", description=__doc__)
    parser.add_argument("--version", action="version", version=f"dareval {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a case manifest")
    p.add_argument("manifest")
    p.add_argument("--allow-empty-checkpoints", action="store_true",
                   help="accept skeleton cases without checkpoints")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("evaluate", help="judge generated images against a manifest")
    p.add_argument("manifest")
    p.add_argument("images_dir", help="directory of <case_id>.<ext> images")
    p.add_argument("--out", required=True, help="output directory for reports")
    p.add_argument("--model-name", default="model-under-test")
    p.add_argument("--runs", type=int, default=0, help="repeat N times and report stability")
    p.add_argument("--cache-dir", default=None, help="verdict cache directory")
    p.add_argument("--missing", choices=["skip", "fatal"], default="fatal",
                   help="policy for cases without a generated image")
    p.add_argument("--per-checkpoint", action="store_true",
                   help="one judge request per checkpoint instead of per case")
    _add_judge_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("checkpoints", help="fill skeleton cases with judge-generated checkpoints")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    _add_judge_flags(p)
    p.set_defaults(func=cmd_checkpoints)

    p = sub.add_parser("dar-demo", help="run attention rebalancing on a tensor fixture")
    p.add_argument("fixture_dir", help="directory with queries.dart1, keys.dart1, segments.json")
    p.add_argument("--gamma", type=float, default=0.15)
    p.add_argument("--m", type=int, default=64)
    p.add_argument("--tau-high", type=float, default=0.7)
    p.add_argument("--tau-low", type=float, default=0.3)
    p.add_argument("--per-segment", action="store_true",
                   help="normalize relevance scores per reference segment")
    p.add_argument("--out", default="diagnostics.json")
    p.set_defaults(func=cmd_dar_demo)

    p = sub.add_parser("synthesize", help="emit case skeletons from element pools")
    p.add_argument("task", choices=[t.value for t in TaskKind])
    p.add_argument("pools", help="element pools JSON")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synthesize)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TransportError, JudgeParseError, GenerationError, CoverageError) as exc:
        print(f"judge failure: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except DarevalError as exc:
        print(exc, file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
