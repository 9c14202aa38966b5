#!/usr/bin/env python3
"""End-to-end reproduction: data, grounding, training, protocol comparison.

Sequences the CLI verbs with conventional ids so the result is exactly what
one would get running them by hand; every artifact lands under --workdir.
With --fast, sizes shrink to a smoke-test scale that finishes in about a
minute (useful for checking the plumbing, not the numbers).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from blockadvice.cli import main as cli


def run(argv: list[str]) -> None:
    print(f"$ blockadvice {' '.join(argv)}", flush=True)
    t0 = time.time()
    code = cli(argv)
    if code != 0:
        sys.exit(code)
    print(f"  [{time.time() - t0:.0f}s]", flush=True)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="runs/pipeline", help="artifact directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--fast", action="store_true", help="smoke-test sizes")
    args = ap.parse_args()

    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    data = str(work / "dataset.json")
    models = str(work / "models")
    seed = str(args.seed)

    if args.fast:
        gen = ["--train", "60", "--dev", "20", "--test", "40"]
        ground = ["--samples", "2000", "--eval-samples", "500"]
        epochs = ["--epochs", "2"]
        epochs2 = ["--epochs2", "2"]
    else:
        gen = ["--train", "600", "--dev", "150", "--test", "300"]
        ground = []  # full pretraining budget from the defaults
        epochs = ["--epochs", "18"]
        epochs2 = ["--epochs2", "8"]

    run(["gen-data", "--out", data, *gen, "--seed", seed])
    run(["pretrain-grounding", "restrictive", *ground, "--models", models, "--seed", "7"])
    run(["pretrain-grounding", "corrective", *ground, "--models", models, "--seed", "7"])
    run(["train", "baseline", "--data", data, *epochs, "--models", models, "--seed", seed])
    run(["train", "restrictive", "--data", data, *epochs, "--models", models, "--seed", seed])
    run(["train", "corrective", "--data", data,
         *(epochs if args.fast else ["--epochs", "12"]), *epochs2,
         "--models", models, "--seed", seed])
    run(["train", "advgen", "--data", data,
         *(epochs if args.fast else ["--epochs", "30"]), "--lr", "1e-4",
         "--models", models, "--seed", seed])
    run(["compare", "--data", data, "--models", models, "--seed", seed,
         "--out", str(work / "compare.json")])
    print(f"artifacts in {work}/", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
