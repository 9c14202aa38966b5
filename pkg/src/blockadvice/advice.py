"""Advice sentences: templates, region naming, tokenization, vocabulary.

Two template families exist: `train` (what grounders and predictors see
during training) and `test` (held-out phrasings used by the oracle advisor
at evaluation time). The families share no full sentence strings, so test
renders genuinely probe generalization across phrasings.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .world import (
    Coordinate,
    Half,
    Quadrant,
    QUADRANT_ORDER,
    Region,
    centered_region,
    half_region,
    quadrant_region,
    union_half,
    union_regions,
)

PAD_ID = 0
OOV_ID = 1

GRID_CELLS = 8  # centered advice names cells of an 8x8 board grid
CELL_SIZE = 2.0 / GRID_CELLS

NUMBER_WORDS = ("zero", "one", "two", "three", "four", "five", "six", "seven")

QUADRANT_PHRASE = {
    Quadrant.TOP_LEFT: "top left",
    Quadrant.TOP_RIGHT: "top right",
    Quadrant.BOTTOM_LEFT: "lower left",
    Quadrant.BOTTOM_RIGHT: "lower right",
}

HALF_PHRASE = {
    Half.LEFT: "left half",
    Half.RIGHT: "right half",
    Half.TOP: "top half",
    Half.BOTTOM: "bottom half",
}

# Words that carry the region/direction payload of a sentence; the OOV
# dropout used during grounding pretraining never masks these.
CONTENT_WORDS = frozenset(
    {"top", "lower", "bottom", "left", "right", "half", "or", "up", "down", "column", "row"}
    | set(NUMBER_WORDS)
)


class Head(enum.Enum):
    SOURCE = "source"
    TARGET = "target"


class AdviceKind(enum.Enum):
    RESTRICTIVE = "restrictive"
    CORRECTIVE = "corrective"
    UNION = "union"
    CENTERED = "centered"
    NULL = "null"


class TemplateError(ValueError):
    """Template fixture violates its contract."""


class TokenizeError(ValueError):
    """Text tokenized to nothing where tokens were required."""


@dataclass(frozen=True)
class AdviceSentence:
    text: str
    kind: AdviceKind

    def __post_init__(self) -> None:
        if self.kind is not AdviceKind.NULL and not self.text:
            raise TemplateError("non-null advice must have text")
        if self.kind is AdviceKind.NULL and self.text:
            raise TemplateError("null advice must be empty")


NULL_ADVICE = AdviceSentence("", AdviceKind.NULL)

_PLACEHOLDER = {
    "restrictive": "{region}",
    "union": "{region}",
    "centered": "{cell}",
    "corrective": "{direction}",
}


def _check_templates(kind: str, items: list[str]) -> None:
    slot = _PLACEHOLDER[kind]
    for t in items:
        if t.count("{") != 1 or t.count("}") != 1 or slot not in t:
            raise TemplateError(f"{kind} template must contain exactly one {slot}: {t!r}")


@dataclass(frozen=True)
class TemplateSet:
    """One family of advice templates (either `train` or `test`)."""

    id: str
    restrictive: dict[Head, tuple[str, ...]]
    union: dict[Head, tuple[str, ...]]
    centered: dict[Head, tuple[str, ...]]
    corrective: tuple[str, ...]

    def all_strings(self) -> set[str]:
        out: set[str] = set(self.corrective)
        for group in (self.restrictive, self.union, self.centered):
            for items in group.values():
                out.update(items)
        return out


def _parse_family(family_id: str, raw: dict) -> TemplateSet:
    def heads(kind: str) -> dict[Head, tuple[str, ...]]:
        d = raw[kind]
        out = {}
        for head in Head:
            items = list(d[head.value])
            _check_templates(kind, items)
            out[head] = tuple(items)
        return out

    corrective = list(raw["corrective"])
    _check_templates("corrective", corrective)
    return TemplateSet(
        id=family_id,
        restrictive=heads("restrictive"),
        union=heads("union"),
        centered=heads("centered"),
        corrective=tuple(corrective),
    )


def load_template_sets() -> dict[str, TemplateSet]:
    """Load and validate the packaged template fixtures."""
    raw = json.loads(resources.files("blockadvice").joinpath("templates.json").read_text())
    families = {fid: _parse_family(fid, raw[fid]) for fid in ("train", "test")}
    overlap = families["train"].all_strings() & families["test"].all_strings()
    if overlap:
        raise TemplateError(f"train/test template overlap: {sorted(overlap)[:3]}")
    return families


_TEMPLATE_SETS: dict[str, TemplateSet] | None = None


def template_set(family: str) -> TemplateSet:
    global _TEMPLATE_SETS
    if _TEMPLATE_SETS is None:
        _TEMPLATE_SETS = load_template_sets()
    try:
        return _TEMPLATE_SETS[family]
    except KeyError:
        raise TemplateError(f"unknown template family {family!r}") from None


def _pick(items: tuple[str, ...], rng: np.random.Generator) -> str:
    return items[int(rng.integers(len(items)))]


def region_phrase(q_or_half: Quadrant | Half) -> str:
    if isinstance(q_or_half, Quadrant):
        return QUADRANT_PHRASE[q_or_half]
    return HALF_PHRASE[q_or_half]


def union_phrase(q1: Quadrant, q2: Quadrant) -> str:
    """Half name for adjacent quadrants; 'a or the b' for diagonal pairs."""
    half = union_half(q1, q2)
    if half is not None:
        return HALF_PHRASE[half]
    a, b = sorted((q1, q2), key=QUADRANT_ORDER.index)
    return f"{QUADRANT_PHRASE[a]} or the {QUADRANT_PHRASE[b]}"


def render_restrictive(
    head: Head, q_or_half: Quadrant | Half, ts: TemplateSet, rng: np.random.Generator
) -> AdviceSentence:
    text = _pick(ts.restrictive[head], rng).format(region=region_phrase(q_or_half))
    return AdviceSentence(text, AdviceKind.RESTRICTIVE)


def render_corrective(
    direction, ts: TemplateSet, rng: np.random.Generator
) -> AdviceSentence:
    text = _pick(ts.corrective, rng).format(direction=direction.value)
    return AdviceSentence(text, AdviceKind.CORRECTIVE)


def render_union(
    head: Head, q1: Quadrant, q2: Quadrant, ts: TemplateSet, rng: np.random.Generator
) -> AdviceSentence:
    text = _pick(ts.union[head], rng).format(region=union_phrase(q1, q2))
    return AdviceSentence(text, AdviceKind.UNION)


def restrictive_regions(q_or_half: Quadrant | Half) -> tuple[Region, ...]:
    if isinstance(q_or_half, Quadrant):
        return (quadrant_region(q_or_half),)
    return (half_region(q_or_half),)


# -- centered-cell grid -------------------------------------------------------

def encode_cell(x: float, z: float) -> tuple[int, int]:
    """(col, row) of the grid cell containing the point; col 0 at x=-1, row 0 at z=-1."""
    col = min(max(int((x + 1.0) / CELL_SIZE), 0), GRID_CELLS - 1)
    row = min(max(int((z + 1.0) / CELL_SIZE), 0), GRID_CELLS - 1)
    return col, row


def cell_center(col: int, row: int) -> tuple[float, float]:
    if not (0 <= col < GRID_CELLS and 0 <= row < GRID_CELLS):
        raise TemplateError(f"cell ({col}, {row}) outside the {GRID_CELLS}x{GRID_CELLS} grid")
    return (-1.0 + CELL_SIZE * (col + 0.5), -1.0 + CELL_SIZE * (row + 0.5))


def cell_phrase(col: int, row: int) -> str:
    cell_center(col, row)  # bounds check
    return f"column {NUMBER_WORDS[col]} row {NUMBER_WORDS[row]}"


_CELL_RE = re.compile(r"column (\w+) row (\w+)")


def decode_cell_phrase(text: str) -> tuple[int, int]:
    """Inverse of cell_phrase, tolerant of surrounding sentence text."""
    m = _CELL_RE.search(text.lower())
    if not m:
        raise TemplateError(f"no cell phrase in {text!r}")
    try:
        return NUMBER_WORDS.index(m.group(1)), NUMBER_WORDS.index(m.group(2))
    except ValueError:
        raise TemplateError(f"unknown cell words in {text!r}") from None


def centered_cell_region(col: int, row: int, side: float = 1.0) -> Region:
    """The board region a centered-cell sentence denotes: a side x side
    square at the named cell's center, slid inside the board."""
    cx, cz = cell_center(col, row)
    return centered_region(Coordinate(cx, 0.0, cz), side)


def render_centered_cell(
    head: Head, col: int, row: int, ts: TemplateSet, rng: np.random.Generator
) -> AdviceSentence:
    text = _pick(ts.centered[head], rng).format(cell=cell_phrase(col, row))
    return AdviceSentence(text, AdviceKind.CENTERED)


def render_centered(
    head: Head, r: Region, ts: TemplateSet, rng: np.random.Generator
) -> AdviceSentence:
    """Name the grid cell containing the region's center."""
    cx, cz = r.center()
    col, row = encode_cell(cx, cz)
    return render_centered_cell(head, col, row, ts, rng)


def union_advice_regions(q1: Quadrant, q2: Quadrant) -> tuple[Region, ...]:
    return union_regions(q1, q2)


# -- tokenization and vocabulary ----------------------------------------------

_PUNCT = str.maketrans("", "", ".,!?'")


def tokenize_words(text: str) -> list[str]:
    """Lowercase, strip . , ! ? ' and split on whitespace."""
    return text.lower().translate(_PUNCT).split()


@dataclass(frozen=True)
class Vocab:
    """Token-to-id map with reserved ids 0 (padding) and 1 (out of vocabulary)."""

    token_to_id: dict[str, int]

    @classmethod
    def from_texts(cls, texts) -> "Vocab":
        words = sorted({w for t in texts for w in tokenize_words(t)})
        return cls({w: i + 2 for i, w in enumerate(words)})

    @property
    def size(self) -> int:
        return len(self.token_to_id) + 2

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def encode_words(self, words: list[str]) -> list[int]:
        return [self.token_to_id.get(w, OOV_ID) for w in words]

    def encode(self, text: str) -> list[int]:
        """Tokenize and map; raises if a non-empty text yields no tokens."""
        words = tokenize_words(text)
        if not words:
            raise TokenizeError(f"text tokenized to nothing: {text!r}")
        return self.encode_words(words)

    def oov_fraction(self, text: str) -> float:
        words = tokenize_words(text)
        if not words:
            return 1.0
        return sum(1 for w in words if w not in self.token_to_id) / len(words)

    def to_json(self) -> dict[str, int]:
        return dict(self.token_to_id)

    @classmethod
    def from_json(cls, d: dict[str, int]) -> "Vocab":
        return cls({str(k): int(v) for k, v in d.items()})


def encode_advice(advice: AdviceSentence, vocab: Vocab) -> list[int] | None:
    """Token ids for a sentence; None for null advice."""
    if advice.kind is AdviceKind.NULL:
        return None
    return vocab.encode(advice.text)
