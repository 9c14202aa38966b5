"""Truthful advice built from gold labels.

Used in two places: the training schedules (train-family templates) and the
simulated human advisor during protocol evaluation (test-family templates).
Restrictive advice always names a region that really contains the gold
coordinate; corrective advice always names the direction that reduces the
dominant-axis error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .advice import (
    AdviceSentence,
    Head,
    encode_cell,
    centered_cell_region,
    render_centered_cell,
    render_corrective,
    render_restrictive,
    render_union,
    template_set,
)
from .world import (
    Coordinate,
    QUADRANT_ORDER,
    Region,
    direction_of,
    quadrant_of,
    quadrant_region,
    region_contains,
    union_regions,
)

# jitter keeps gold inside the snapped cell region: 0.5 (half side) minus
# 0.125 (max snap shift) minus a 0.005 safety rim
_CENTER_JITTER = 0.37

SAME_POINT_EPS = 1e-9


@dataclass(frozen=True)
class GoldAdvice:
    sentence: AdviceSentence
    regions: tuple[Region, ...]


def gold_restrictive_advice(
    gold: Coordinate,
    head: Head,
    family: str,
    rng: np.random.Generator,
    mix: tuple[float, float, float] | None = None,
) -> GoldAdvice:
    """Truthful region advice for a gold coordinate.

    mix = (quadrant, union, centered) kind probabilities; None means
    quadrant advice only (what the oracle advisor gives).
    """
    ts = template_set(family)
    q = quadrant_of(gold)
    kind = "quadrant"
    if mix is not None:
        w = np.asarray(mix, dtype=np.float64)
        kind = ("quadrant", "union", "centered")[int(rng.choice(3, p=w / w.sum()))]
    if kind == "union":
        others = [p for p in QUADRANT_ORDER if p != q]
        other = others[int(rng.integers(len(others)))]
        return GoldAdvice(render_union(head, q, other, ts, rng), union_regions(q, other))
    if kind == "centered":
        for _ in range(20):
            cx = gold.x + float(rng.uniform(-_CENTER_JITTER, _CENTER_JITTER))
            cz = gold.z + float(rng.uniform(-_CENTER_JITTER, _CENTER_JITTER))
            col, row = encode_cell(cx, cz)
            region = centered_cell_region(col, row)
            if region_contains(region, gold):
                return GoldAdvice(render_centered_cell(head, col, row, ts, rng), (region,))
        # extremely rare; fall through to quadrant advice
    return GoldAdvice(render_restrictive(head, q, ts, rng), (quadrant_region(q),))


def gold_corrective_advice(
    pred: Coordinate, gold: Coordinate, family: str, rng: np.random.Generator
) -> AdviceSentence | None:
    """Direction advice toward gold; None when pred matches gold in x-z."""
    if abs(pred.x - gold.x) < SAME_POINT_EPS and abs(pred.z - gold.z) < SAME_POINT_EPS:
        return None
    return render_corrective(direction_of(pred, gold), template_set(family), rng)
