"""Dataset schema, loader, and the synthetic blocks-world generator.

Synthetic instructions reference blocks only by spatial properties
("the leftmost block", "the most central block"), never by labels. Each
example is solvable by construction: an exact parser of the instruction
grammar can recover the gold target from the board alone.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn.rng import Rng
from .world import (
    BOARD_MAX,
    BOARD_MIN,
    MAX_BLOCKS,
    BoardState,
    Coordinate,
    quadrant_of,
)

SCHEMA_VERSION = 1
SPLIT_NAMES = ("train", "dev", "test")


class DataError(ValueError):
    """Dataset file or generation contract violation."""


class GenerationError(DataError):
    """Synthetic generation could not satisfy its constraints."""


@dataclass(frozen=True)
class Example:
    id: str
    world: BoardState
    instruction: str
    source_index: int
    gold_target: Coordinate

    def __post_init__(self) -> None:
        if not (0 <= self.source_index < len(self.world.blocks)):
            raise DataError(f"{self.id}: source_index {self.source_index} out of range")
        if not self.instruction:
            raise DataError(f"{self.id}: empty instruction")

    @property
    def gold_source(self) -> Coordinate:
        return self.world.blocks[self.source_index]


@dataclass(frozen=True)
class Dataset:
    block_length: float
    splits: dict[str, tuple[Example, ...]]
    provenance: dict

    def split(self, name: str) -> tuple[Example, ...]:
        try:
            return self.splits[name]
        except KeyError:
            raise DataError(f"unknown split {name!r}") from None

    def all_examples(self) -> list[Example]:
        return [ex for name in SPLIT_NAMES for ex in self.splits.get(name, ())]


@dataclass(frozen=True)
class GeneratorConfig:
    train: int = 2000
    dev: int = 300
    test: int = 500
    blocks_min: int = 3
    blocks_max: int = MAX_BLOCKS
    block_length: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if not (1 <= self.blocks_min <= self.blocks_max <= MAX_BLOCKS):
            raise DataError(f"bad block count range [{self.blocks_min}, {self.blocks_max}]")
        if min(self.train, self.dev, self.test) <= 0:
            raise DataError("split sizes must be positive")
        if not (0 < self.block_length < 1):
            raise DataError(f"bad block_length {self.block_length}")


# Spatial properties a block can be referenced by, with the scoring that
# makes "the <property> block" well defined. Lower score wins.
_PROPERTIES = {
    "leftmost": lambda b: b.x,
    "rightmost": lambda b: -b.x,
    "topmost": lambda b: -b.z,
    "bottommost": lambda b: b.z,
    "most central": lambda b: math.hypot(b.x, b.z),
}

_DIRECTIONS = {
    "above": (0.0, 1.0),
    "below": (0.0, -1.0),
    "left of": (-1.0, 0.0),
    "right of": (1.0, 0.0),
}

_DISTANCE_WORDS = {1: "one length", 2: "two lengths", 3: "three lengths"}
_VERBS = ("move", "place", "put")

_PLACEMENT_ATTEMPTS = 10_000


def resolve_property(board: BoardState, prop: str) -> tuple[int, float]:
    """(index of the best block, margin to the runner-up) for a property."""
    score = _PROPERTIES[prop]
    scores = [score(b) for b in board.blocks]
    order = sorted(range(len(scores)), key=scores.__getitem__)
    best = order[0]
    margin = scores[order[1]] - scores[best] if len(order) > 1 else math.inf
    return best, margin


def _place_blocks(n: int, block_length: float, rng: np.random.Generator) -> list[Coordinate]:
    lo, hi = BOARD_MIN + 0.05, BOARD_MAX - 0.05
    placed: list[Coordinate] = []
    attempts = 0
    while len(placed) < n:
        attempts += 1
        if attempts > _PLACEMENT_ATTEMPTS:
            raise GenerationError(f"could not place {n} blocks after {attempts - 1} attempts")
        x, z = rng.uniform(lo, hi, size=2)
        if all(math.hypot(b.x - x, b.z - z) >= block_length for b in placed):
            placed.append(Coordinate(float(x), block_length, float(z)))
    return placed


def _unique_properties(board: BoardState, margin: float) -> dict[str, int]:
    """Properties whose best block beats the runner-up by at least `margin`."""
    out = {}
    for prop in _PROPERTIES:
        idx, m = resolve_property(board, prop)
        if m >= margin:
            out[prop] = idx
    return out


def _target_options(
    board: BoardState, ref: Coordinate, source_idx: int
) -> list[tuple[int, str, Coordinate]]:
    options = []
    for k in (1, 2, 3):
        for phrase, (dx, dz) in _DIRECTIONS.items():
            x = ref.x + k * board.block_length * dx
            z = ref.z + k * board.block_length * dz
            if BOARD_MIN <= x <= BOARD_MAX and BOARD_MIN <= z <= BOARD_MAX:
                options.append((k, phrase, Coordinate(x, ref.y, z)))
    clear = [
        opt
        for opt in options
        if all(
            math.hypot(b.x - opt[2].x, b.z - opt[2].z) >= board.block_length
            for i, b in enumerate(board.blocks)
            if i != source_idx
        )
    ]
    return clear or options


def _generate_example(ex_id: str, config: GeneratorConfig, rng: np.random.Generator) -> Example:
    margin = 0.5 * config.block_length
    for _ in range(200):
        n = int(rng.integers(config.blocks_min, config.blocks_max + 1))
        board = BoardState(tuple(_place_blocks(n, config.block_length, rng)), config.block_length)
        unique = _unique_properties(board, margin)
        if len(unique) < 2 or len(set(unique.values())) < 2:
            continue
        props = sorted(unique)
        src_prop = props[int(rng.integers(len(props)))]
        ref_choices = [p for p in props if unique[p] != unique[src_prop]]
        if not ref_choices:
            continue
        ref_prop = ref_choices[int(rng.integers(len(ref_choices)))]
        src_idx = unique[src_prop]
        ref_idx = unique[ref_prop]
        options = _target_options(board, board.blocks[ref_idx], src_idx)
        k, dir_phrase, target = options[int(rng.integers(len(options)))]
        verb = _VERBS[int(rng.integers(len(_VERBS)))]
        instruction = (
            f"{verb} the {src_prop} block {_DISTANCE_WORDS[k]} "
            f"{dir_phrase} the {ref_prop} block"
        )
        return Example(ex_id, board, instruction, src_idx, target)
    raise GenerationError(f"{ex_id}: no board with two uniquely referenced blocks in 200 tries")


def generate_synthetic(config: GeneratorConfig) -> Dataset:
    """Deterministic synthetic dataset; same config gives identical data."""
    rng = Rng(config.seed).child("datagen")
    sizes = {"train": config.train, "dev": config.dev, "test": config.test}
    seen: set[tuple[str, tuple]] = set()
    splits: dict[str, tuple[Example, ...]] = {}
    counter = 0
    for name in SPLIT_NAMES:
        examples = []
        while len(examples) < sizes[name]:
            ex = _generate_example(f"ex-{counter:05d}", config, rng.generator)
            key = (ex.instruction, tuple((round(b.x, 6), round(b.z, 6)) for b in ex.world.blocks))
            if key in seen:
                continue
            seen.add(key)
            examples.append(ex)
            counter += 1
        splits[name] = tuple(examples)
    provenance = {
        "kind": "synthetic",
        "seed": config.seed,
        "config": {
            "train": config.train,
            "dev": config.dev,
            "test": config.test,
            "blocks_min": config.blocks_min,
            "blocks_max": config.blocks_max,
            "block_length": config.block_length,
        },
    }
    return Dataset(config.block_length, splits, provenance)


# -- serialization --------------------------------------------------------------

def dataset_to_json(d: Dataset) -> dict:
    examples = []
    for ex in d.all_examples():
        examples.append(
            {
                "id": ex.id,
                "world": [[b.x, b.y, b.z] for b in ex.world.blocks],
                "instruction": ex.instruction,
                "source_index": ex.source_index,
                "target": list(ex.gold_target.as_tuple()),
            }
        )
    return {
        "version": SCHEMA_VERSION,
        "block_length": d.block_length,
        "coord_range": {"x": [BOARD_MIN, BOARD_MAX], "z": [BOARD_MIN, BOARD_MAX]},
        "examples": examples,
        "splits": {name: [ex.id for ex in d.splits.get(name, ())] for name in SPLIT_NAMES},
        "provenance": d.provenance,
    }


def save_dataset(d: Dataset, path: str | Path) -> None:
    Path(path).write_text(json.dumps(dataset_to_json(d), indent=1) + "\n")


def _axis_map(rng_pair, axis: str):
    if (
        not isinstance(rng_pair, list)
        or len(rng_pair) != 2
        or not all(isinstance(v, (int, float)) and math.isfinite(v) for v in rng_pair)
        or not rng_pair[0] < rng_pair[1]
    ):
        raise DataError(f"coord_range.{axis} must be [lo, hi] with lo < hi")
    lo, hi = float(rng_pair[0]), float(rng_pair[1])
    scale = (BOARD_MAX - BOARD_MIN) / (hi - lo)
    return lambda v: BOARD_MIN + (v - lo) * scale, scale


def _clamp_board(v: float) -> float:
    return min(max(v, BOARD_MIN), BOARD_MAX)


def load_dataset(path: str | Path) -> Dataset:
    """Parse, normalize to board units, and validate; total (no partial data).

    Invariant-violating examples cause a DataError naming their ids; block
    separation below block_length only warns, matching the loader-lenient
    contract.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise DataError(f"dataset file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(raw, dict):
        raise DataError(f"{path}: top level must be an object")
    if raw.get("version") != SCHEMA_VERSION:
        raise DataError(f"{path}: unsupported version {raw.get('version')!r}")
    if not isinstance(raw.get("block_length"), (int, float)) or not raw["block_length"] > 0:
        raise DataError(f"{path}: block_length must be a positive number")
    cr = raw.get("coord_range")
    if not isinstance(cr, dict) or set(cr) != {"x", "z"}:
        raise DataError(f"{path}: coord_range must have exactly keys x and z")
    map_x, scale_x = _axis_map(cr["x"], "x")
    map_z, _ = _axis_map(cr["z"], "z")
    # y has no declared range; it shares the x scale so shapes keep their
    # aspect ratio, as does block_length (the error metric's unit)
    block_length = float(raw["block_length"]) * scale_x

    examples_raw = raw.get("examples")
    if not isinstance(examples_raw, list) or not examples_raw:
        raise DataError(f"{path}: examples must be a non-empty list")

    by_id: dict[str, Example] = {}
    bad: list[str] = []
    loose: list[str] = []
    for i, item in enumerate(examples_raw):
        ex_id = str(item.get("id", f"<index {i}>")) if isinstance(item, dict) else f"<index {i}>"
        try:
            ex = _parse_example(item, map_x, map_z, scale_x, block_length)
        except DataError:
            bad.append(ex_id)
            continue
        if ex.id in by_id:
            bad.append(ex.id)
            continue
        by_id[ex.id] = ex
        min_sep = min(
            (
                math.hypot(a.x - b.x, a.z - b.z)
                for j, a in enumerate(ex.world.blocks)
                for b in ex.world.blocks[j + 1 :]
            ),
            default=math.inf,
        )
        if min_sep < block_length:
            loose.append(ex.id)
    if bad:
        raise DataError(f"{path}: invalid examples rejected: {bad}")
    if loose:
        warnings.warn(f"{path}: blocks closer than one block length in: {loose[:5]}...")

    splits_raw = raw.get("splits")
    if not isinstance(splits_raw, dict):
        raise DataError(f"{path}: splits must be an object")
    splits: dict[str, tuple[Example, ...]] = {}
    claimed: set[str] = set()
    for name in SPLIT_NAMES:
        ids = splits_raw.get(name, [])
        if not isinstance(ids, list):
            raise DataError(f"{path}: splits.{name} must be a list of ids")
        unknown = [i for i in ids if i not in by_id]
        if unknown:
            raise DataError(f"{path}: splits.{name} references unknown ids: {unknown[:5]}")
        dup = claimed.intersection(ids)
        if dup or len(set(ids)) != len(ids):
            raise DataError(f"{path}: example ids appear in multiple splits: {sorted(dup)[:5]}")
        claimed.update(ids)
        splits[name] = tuple(by_id[i] for i in ids)
    provenance = {"kind": "loaded", "path": str(path)}
    return Dataset(block_length, splits, provenance)


def _parse_example(item, map_x, map_z, scale_x, block_length: float) -> Example:
    if not isinstance(item, dict):
        raise DataError("example must be an object")
    for key in ("id", "world", "instruction", "source_index", "target"):
        if key not in item:
            raise DataError(f"missing key {key}")
    world_raw = item["world"]
    if (
        not isinstance(world_raw, list)
        or not (1 <= len(world_raw) <= MAX_BLOCKS)
        or not all(isinstance(b, list) and len(b) == 3 for b in world_raw)
    ):
        raise DataError("world must be a list of 1..20 [x, y, z] triples")
    if not isinstance(item["target"], list) or len(item["target"]) != 3:
        raise DataError("target must be an [x, y, z] triple")
    flat = [v for b in world_raw for v in b] + list(item["target"])
    if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in flat):
        raise DataError("non-finite or malformed coordinates")
    blocks = tuple(
        Coordinate(_clamp_board(map_x(b[0])), b[1] * scale_x, _clamp_board(map_z(b[2])))
        for b in world_raw
    )
    t = item["target"]
    target = Coordinate(_clamp_board(map_x(t[0])), t[1] * scale_x, _clamp_board(map_z(t[2])))
    idx = item["source_index"]
    if not isinstance(idx, int) or not (0 <= idx < len(blocks)):
        raise DataError("source_index out of range")
    instruction = item["instruction"]
    if not isinstance(instruction, str) or not instruction.strip():
        raise DataError("instruction must be a non-empty string")
    return Example(
        str(item["id"]), BoardState(blocks, block_length), instruction, idx, target
    )


def dataset_stats(d: Dataset) -> dict:
    """Counts, gold-target quadrant distribution, and block geometry summary."""
    stats: dict = {"counts": {name: len(d.splits.get(name, ())) for name in SPLIT_NAMES}}
    quad_counts: dict[str, int] = {}
    pair_dists = []
    blocks_per_board = []
    for ex in d.all_examples():
        q = quadrant_of(ex.gold_target).value
        quad_counts[q] = quad_counts.get(q, 0) + 1
        blocks_per_board.append(len(ex.world.blocks))
        bs = ex.world.blocks
        for j, a in enumerate(bs):
            for b in bs[j + 1 :]:
                pair_dists.append(math.hypot(a.x - b.x, a.z - b.z))
    total = max(1, sum(quad_counts.values()))
    stats["target_quadrant_fractions"] = {k: v / total for k, v in sorted(quad_counts.items())}
    stats["mean_pairwise_block_distance"] = (
        float(np.mean(pair_dists)) if pair_dists else 0.0
    )
    stats["mean_blocks_per_board"] = float(np.mean(blocks_per_board)) if blocks_per_board else 0.0
    stats["block_length"] = d.block_length
    return stats


def instruction_texts(d: Dataset, split: str = "train") -> list[str]:
    return [ex.instruction for ex in d.split(split)]
