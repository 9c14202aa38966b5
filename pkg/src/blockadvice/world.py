"""Board geometry: coordinates, regions, directions, and the error metric.

The board is the square x, z in [-1, 1] seen top-down; y is height and never
participates in regions or directions. x runs left to right, z runs bottom
to top. Boundary coordinates (x = 0 or z = 0) belong to the Right/Top side.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

BOARD_MIN = -1.0
BOARD_MAX = 1.0
MAX_BLOCKS = 20

# Feature layout consumed by the learned models: MAX_BLOCKS slots of
# (x, y, z), absent slots all-zero. Real blocks always have y > 0, so a
# zero triple unambiguously means "no block here".
WORLD_FEATURES = MAX_BLOCKS * 3


class GeometryError(ValueError):
    """Raised when a geometric operation gets out-of-contract input."""


class Quadrant(enum.Enum):
    TOP_LEFT = "top_left"
    TOP_RIGHT = "top_right"
    BOTTOM_LEFT = "bottom_left"
    BOTTOM_RIGHT = "bottom_right"


class Half(enum.Enum):
    LEFT = "left"
    RIGHT = "right"
    TOP = "top"
    BOTTOM = "bottom"


class Direction(enum.Enum):
    UP = "up"
    DOWN = "down"
    LEFT = "left"
    RIGHT = "right"


QUADRANT_ORDER = (
    Quadrant.TOP_LEFT,
    Quadrant.TOP_RIGHT,
    Quadrant.BOTTOM_LEFT,
    Quadrant.BOTTOM_RIGHT,
)


@dataclass(frozen=True)
class Coordinate:
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        for v in (self.x, self.y, self.z):
            if not math.isfinite(v):
                raise GeometryError(f"non-finite coordinate {(self.x, self.y, self.z)}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class Region:
    """Closed axis-aligned rectangle in the x-z plane."""

    x_min: float
    x_max: float
    z_min: float
    z_max: float

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.z_min < self.z_max):
            raise GeometryError(f"degenerate region {self}")

    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.z_max - self.z_min)

    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2, (self.z_min + self.z_max) / 2)


@dataclass(frozen=True)
class BoardState:
    blocks: tuple[Coordinate, ...]
    block_length: float

    def __post_init__(self) -> None:
        if not (1 <= len(self.blocks) <= MAX_BLOCKS):
            raise GeometryError(f"board must have 1..{MAX_BLOCKS} blocks, got {len(self.blocks)}")
        if not (self.block_length > 0):
            raise GeometryError(f"block_length must be > 0, got {self.block_length}")


def quadrant_of(c: Coordinate) -> Quadrant:
    """Quadrant under the boundaries-go-Right/Top tie-break."""
    right = c.x >= 0
    top = c.z >= 0
    if top:
        return Quadrant.TOP_RIGHT if right else Quadrant.TOP_LEFT
    return Quadrant.BOTTOM_RIGHT if right else Quadrant.BOTTOM_LEFT


def quadrant_region(q: Quadrant) -> Region:
    x = (0.0, BOARD_MAX) if q in (Quadrant.TOP_RIGHT, Quadrant.BOTTOM_RIGHT) else (BOARD_MIN, 0.0)
    z = (0.0, BOARD_MAX) if q in (Quadrant.TOP_LEFT, Quadrant.TOP_RIGHT) else (BOARD_MIN, 0.0)
    return Region(x[0], x[1], z[0], z[1])


def half_region(h: Half) -> Region:
    if h is Half.LEFT:
        return Region(BOARD_MIN, 0.0, BOARD_MIN, BOARD_MAX)
    if h is Half.RIGHT:
        return Region(0.0, BOARD_MAX, BOARD_MIN, BOARD_MAX)
    if h is Half.TOP:
        return Region(BOARD_MIN, BOARD_MAX, 0.0, BOARD_MAX)
    return Region(BOARD_MIN, BOARD_MAX, BOARD_MIN, 0.0)


# Unordered adjacent quadrant pairs collapse to a half; diagonal pairs stay
# a two-rectangle union.
_ADJACENT_HALF = {
    frozenset((Quadrant.TOP_LEFT, Quadrant.BOTTOM_LEFT)): Half.LEFT,
    frozenset((Quadrant.TOP_RIGHT, Quadrant.BOTTOM_RIGHT)): Half.RIGHT,
    frozenset((Quadrant.TOP_LEFT, Quadrant.TOP_RIGHT)): Half.TOP,
    frozenset((Quadrant.BOTTOM_LEFT, Quadrant.BOTTOM_RIGHT)): Half.BOTTOM,
}


def union_half(q1: Quadrant, q2: Quadrant) -> Half | None:
    """The half covering q1 and q2 if they are adjacent, else None."""
    if q1 == q2:
        raise GeometryError("union of a quadrant with itself")
    return _ADJACENT_HALF.get(frozenset((q1, q2)))


def union_regions(q1: Quadrant, q2: Quadrant) -> tuple[Region, ...]:
    """Rectangles whose union is the region covered by the two quadrants."""
    half = union_half(q1, q2)
    if half is not None:
        return (half_region(half),)
    return (quadrant_region(q1), quadrant_region(q2))


def direction_of(pred: Coordinate, gold: Coordinate) -> Direction:
    """Which way the prediction must move toward gold, on the larger-error axis.

    Ties between |dx| and |dz| go to the x axis.
    """
    dx = gold.x - pred.x
    dz = gold.z - pred.z
    if abs(dx) < 1e-9 and abs(dz) < 1e-9:
        raise GeometryError("prediction coincides with gold in the x-z plane; no direction")
    if abs(dx) >= abs(dz):
        return Direction.LEFT if dx < 0 else Direction.RIGHT
    return Direction.DOWN if dz < 0 else Direction.UP


def centered_region(center: Coordinate, side: float) -> Region:
    """Square of exact area side**2 at `center`, translated to fit the board.

    The square is never shrunk; when it would cross a board edge it slides
    inward just enough. Off-board centers are clamped to the board first so
    the result always contains the (clamped) center.
    """
    if not (0 < side <= BOARD_MAX - BOARD_MIN):
        raise GeometryError(f"side must be in (0, 2], got {side}")
    half = side / 2
    cx = min(max(center.x, BOARD_MIN), BOARD_MAX)
    cz = min(max(center.z, BOARD_MIN), BOARD_MAX)
    x_min = min(max(cx - half, BOARD_MIN), BOARD_MAX - side)
    z_min = min(max(cz - half, BOARD_MIN), BOARD_MAX - side)
    return Region(x_min, x_min + side, z_min, z_min + side)


def region_contains(r: Region, c: Coordinate) -> bool:
    return r.x_min <= c.x <= r.x_max and r.z_min <= c.z <= r.z_max


def any_region_contains(regions: tuple[Region, ...], c: Coordinate) -> bool:
    return any(region_contains(r, c) for r in regions)


def normalized_error(pred: Coordinate, gold: Coordinate, block_length: float) -> float:
    """3-D Euclidean distance in units of block lengths (64-bit arithmetic)."""
    if not (block_length > 0):
        raise GeometryError(f"block_length must be > 0, got {block_length}")
    d = np.asarray(pred.as_tuple(), dtype=np.float64) - np.asarray(
        gold.as_tuple(), dtype=np.float64
    )
    return float(np.sqrt(d @ d) / block_length)


def world_features(board: BoardState) -> np.ndarray:
    """Fixed-size float32 vector of block coordinates, zero-padded."""
    out = np.zeros(WORLD_FEATURES, dtype=np.float32)
    for i, b in enumerate(board.blocks):
        out[3 * i : 3 * i + 3] = (b.x, b.y, b.z)
    return out
