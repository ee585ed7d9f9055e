#!/usr/bin/env python3
"""Write a synthetic tensor fixture for the dar-demo subcommand.

The key sequence is text(4) | ref0(6) | ref1(6) | noise(4). Reference
segment 1 keys are aligned with the mean query direction and scaled up,
so the rebalancing pass amplifies them; segment 0 stays random.

Usage: python3 scripts/make_dar_fixture.py [OUT_DIR] [--seed N] [--ref1-scale S]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from dareval.tensors import (  # noqa: E402
    HeadedTensor,
    KeySegments,
    Segment,
    write_segments,
    write_tensor,
)


def make_fixture(out_dir: Path, seed: int = 3, ref1_scale: float = 3.0) -> None:
    rng = np.random.default_rng(seed)
    heads, dim = 2, 4
    queries = rng.normal(size=(24, heads, dim))
    keys = rng.normal(size=(20, heads, dim))
    direction = queries.mean(axis=0)
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    scales = np.linspace(ref1_scale / 2, ref1_scale, 6)
    keys[10:16] = direction[None, :, :] * scales[:, None, None]

    out_dir.mkdir(parents=True, exist_ok=True)
    write_tensor(out_dir / "queries.dart1", HeadedTensor(queries))
    write_tensor(out_dir / "keys.dart1", HeadedTensor(keys))
    write_segments(
        out_dir / "segments.json",
        KeySegments(
            (
                Segment(kind="text", start=0, length=4),
                Segment(kind="reference_image", start=4, length=6, index=0),
                Segment(kind="reference_image", start=10, length=6, index=1),
                Segment(kind="noise", start=16, length=4),
            )
        ),
    )
    print(f"fixture written to {out_dir}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir", nargs="?", default="fixtures/dar_demo")
    parser.add_argument("--seed", type=int, default=3)
    parser.add_argument("--ref1-scale", type=float, default=3.0)
    args = parser.parse_args()
    make_fixture(Path(args.out_dir), seed=args.seed, ref1_scale=args.ref1_scale)


if __name__ == "__main__":
    main()
