#!/usr/bin/env python3
"""Sweep the modulation factor over the ablation grid on a synthetic input.

For each gamma in {0.05, 0.15, 0.25, 0.35, 0.55} this prints how much
attention mass each key segment gains or loses relative to baseline, plus
the size of the amplified/suppressed token bands. Useful for eyeballing
how aggressively a given gamma redistributes attention.

Usage: python3 scripts/gamma_sweep.py [--seed N] [--queries N] [--keys N]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from dareval.rebalance import (  # noqa: E402
    RebalanceConfig,
    baseline_attention,
    rebalance_pipeline,
    segment_attention_shares,
)
from dareval.tensors import HeadedTensor, KeySegments, Segment  # noqa: E402

GAMMA_GRID = (0.05, 0.15, 0.25, 0.35, 0.55)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--queries", type=int, default=256)
    parser.add_argument("--keys", type=int, default=128)
    parser.add_argument("--heads", type=int, default=4)
    parser.add_argument("--dim", type=int, default=16)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    queries = HeadedTensor(rng.normal(size=(args.queries, args.heads, args.dim)))
    keys_arr = rng.normal(size=(args.keys, args.heads, args.dim))

    text_len = max(args.keys // 8, 1)
    noise_len = max(args.keys // 8, 1)
    ref_len = args.keys - text_len - noise_len
    ref0_len = ref_len // 2
    segments = KeySegments(
        (
            Segment(kind="text", start=0, length=text_len),
            Segment(kind="reference_image", start=text_len, length=ref0_len, index=0),
            Segment(kind="reference_image", start=text_len + ref0_len, length=ref_len - ref0_len, index=1),
            Segment(kind="noise", start=text_len + ref_len, length=noise_len),
        )
    )
    # make the second reference segment stand out
    direction = queries.data.mean(axis=0)
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    start = text_len + ref0_len
    keys_arr[start : start + (ref_len - ref0_len)] = direction[None, :, :] * 2.5
    keys = HeadedTensor(keys_arr)

    before = segment_attention_shares(baseline_attention(queries, keys), segments)
    labels = list(before)
    header = f"{'gamma':>6} " + " ".join(f"{label:>20}" for label in labels) + f" {'amp/sup':>10}"
    print(header)
    print(f"{'base':>6} " + " ".join(f"{before[label]:>20.4f}" for label in labels))

    for gamma in GAMMA_GRID:
        cfg = RebalanceConfig(gamma=gamma)
        adjusted, stats = rebalance_pipeline(queries, keys, segments, cfg)
        after = segment_attention_shares(adjusted, segments)
        amplified = int((stats.weights > 1.0).sum())
        suppressed = int((stats.weights < 1.0).sum())
        deltas = " ".join(f"{after[label] - before[label]:>+20.4f}" for label in labels)
        print(f"{gamma:>6.2f} {deltas} {amplified:>5}/{suppressed}")


if __name__ == "__main__":
    main()
