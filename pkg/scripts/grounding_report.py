#!/usr/bin/env python3
"""Accuracy breakdown for a pretrained advice grounder.

Loads a grounder from a registry (or pretrains one when --pretrain is set)
and reports region-membership accuracy split by advice kind and by distance
to the region boundary, on both template families. Boundary-adjacent
samples are where a grounder earns its keep; the sliced view shows whether
errors cluster at the decision edge or spread across the board.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from blockadvice.advice import template_set
from blockadvice.grounding import (
    RestrictiveGrounder,
    _boundary_distance,
    default_grounding_config,
    pretrain_restrictive,
    sample_restrictive,
)
from blockadvice.nn import Rng
from blockadvice.registry import ModelRegistry

KINDS = ("quadrant", "half", "union", "centered")
BANDS = ((0.0, 0.05), (0.05, 0.15), (0.15, 0.5), (0.5, 3.0))


def kind_accuracy(model: RestrictiveGrounder, family: str, kind: str, n: int, rng) -> float:
    ts = template_set(family)
    weights = tuple(1.0 if k == kind else 0.0 for k in KINDS)
    hits = 0
    for _ in range(n):
        s = sample_restrictive(ts, rng, kind_weights=weights)
        hits += int(int(model.classify(model.vocab.encode(s.text), s.coord)) == s.label)
    return hits / n


def band_accuracy(model: RestrictiveGrounder, family: str, n: int, rng) -> dict:
    ts = template_set(family)
    hits = {b: [0, 0] for b in BANDS}
    while sum(v[1] for v in hits.values()) < n:
        s = sample_restrictive(ts, rng)
        d = _boundary_distance(s.regions, s.coord.x, s.coord.z)
        for lo, hi in BANDS:
            if lo <= d < hi:
                row = hits[(lo, hi)]
                row[0] += int(int(model.classify(model.vocab.encode(s.text), s.coord)) == s.label)
                row[1] += 1
                break
    return hits


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--models", default="models", help="registry directory")
    ap.add_argument("--name", default="grounder_restrictive")
    ap.add_argument("--pretrain", action="store_true",
                    help="pretrain with default settings instead of loading")
    ap.add_argument("--samples", type=int, default=4000, help="samples per slice")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    if args.pretrain:
        model, metrics = pretrain_restrictive(
            default_grounding_config("restrictive"), Rng(args.seed)
        )
        print(f"pretrained: train {metrics.train_template_accuracy:.4f} "
              f"test {metrics.test_template_accuracy:.4f}")
    else:
        model = ModelRegistry(args.models).load_restrictive_grounder(args.name)

    rng = np.random.default_rng(args.seed)
    print(f"{'family':<8} {'kind':<10} accuracy   (n={args.samples})")
    for family in ("train", "test"):
        for kind in KINDS:
            acc = kind_accuracy(model, family, kind, args.samples, rng)
            print(f"{family:<8} {kind:<10} {acc:.4f}")

    print("\nby distance to region boundary (board units):")
    for family in ("train", "test"):
        for (lo, hi), (ok, n) in band_accuracy(model, family, args.samples, rng).items():
            share = n and ok / n
            print(f"{family:<8} [{lo:.2f}, {hi:.2f})  {share:.4f}  ({ok}/{n})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
