"""Pre-trained advice-understanding models.

Two networks share one trunk shape: a sentence encoder (embedding + LSTM +
projection to 100) and three per-axis coordinate encoders (1 -> 100). The
four projections are summed and passed through a relu before the output
layer; summing before the nonlinearity is what lets the hidden layer
represent joint sentence-coordinate conditions rather than additive
per-input scores.

The restrictive model classifies "is this coordinate inside the advised
region"; the corrective model regresses an advice-following coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .advice import (
    CONTENT_WORDS,
    GRID_CELLS,
    OOV_ID,
    Head,
    TemplateSet,
    Vocab,
    cell_phrase,
    centered_cell_region,
    render_centered_cell,
    render_corrective,
    render_restrictive,
    render_union,
    restrictive_regions,
    template_set,
    tokenize_words,
    union_phrase,
    union_regions,
)
from .nn import (
    Adam,
    Module,
    Rng,
    Tensor,
    add_n,
    backward,
    embedding_lookup,
    fc_forward,
    fc_params,
    lstm_forward,
    lstm_params,
    mse_loss,
    normal_embedding,
    relu,
    softmax_cross_entropy,
)
from .training import TrainingError, apply_batch_update, check_loss_finite
from .world import (
    BOARD_MAX,
    BOARD_MIN,
    Coordinate,
    Direction,
    Half,
    QUADRANT_ORDER,
    Region,
    any_region_contains,
)

EMBED_DIM = 100
HIDDEN_DIM = 256
TRUNK_DIM = 100

RESTRICTIVE_ARCH = "grounder.restrictive.v1"
CORRECTIVE_ARCH = "grounder.corrective.v1"

_UNORDERED_PAIRS = [
    (a, b) for i, a in enumerate(QUADRANT_ORDER) for b in QUADRANT_ORDER[i + 1 :]
]

GHOST_MARGIN = 0.05


class Grounder(Module):
    """Shared trunk; subclass fixes the output width and architecture id."""

    out_dim: int
    architecture: str

    def __init__(self, vocab: Vocab, rng: Rng) -> None:
        super().__init__()
        self.vocab = vocab
        r = rng.child(self.architecture)
        self.register(normal_embedding(r.child("embedding"), "embedding", vocab.size, EMBED_DIM))
        for p in lstm_params(r, "lstm", EMBED_DIM, HIDDEN_DIM):
            self.register(p)
        for p in fc_params(r, "sent", HIDDEN_DIM, TRUNK_DIM):
            self.register(p)
        for axis in ("x", "y", "z"):
            for p in fc_params(r, f"coord.{axis}", 1, TRUNK_DIM):
                self.register(p)
        for p in fc_params(r, "out", TRUNK_DIM, self.out_dim):
            self.register(p)

    def sentence_state(self, token_ids: list[int]) -> Tensor:
        emb = embedding_lookup(self.get_parameter("embedding"), token_ids)
        states = lstm_forward(
            self.get_parameter("lstm.wx"),
            self.get_parameter("lstm.wh"),
            self.get_parameter("lstm.b"),
            emb,
        )
        return states.last

    def sentence_feature(self, token_ids: list[int]) -> Tensor:
        return fc_forward(
            self.sentence_state(token_ids),
            self.get_parameter("sent.w"),
            self.get_parameter("sent.b"),
        )

    def forward(self, token_ids: list[int], coord: Coordinate) -> Tensor:
        parts = [self.sentence_feature(token_ids)]
        for axis, value in zip(("x", "y", "z"), coord.as_tuple()):
            parts.append(
                fc_forward(
                    Tensor(np.asarray([value], dtype=np.float32)),
                    self.get_parameter(f"coord.{axis}.w"),
                    self.get_parameter(f"coord.{axis}.b"),
                )
            )
        hidden = relu(add_n(parts))
        return fc_forward(hidden, self.get_parameter("out.w"), self.get_parameter("out.b"))

    def lstm_parameters(self):
        return [self.get_parameter(n) for n in ("lstm.wx", "lstm.wh", "lstm.b")]

    def meta(self, config: "GroundingConfig") -> dict:
        return {
            "architecture": self.architecture,
            "hyperparameters": {
                "embed_dim": EMBED_DIM,
                "hidden_dim": HIDDEN_DIM,
                "trunk_dim": TRUNK_DIM,
                "out_dim": self.out_dim,
                "train_samples": config.train_samples,
                "epochs": config.epochs,
                "batch_size": config.batch_size,
                "lr": config.lr,
            },
            "vocab": self.vocab.to_json(),
            "seed": config.seed,
        }


class RestrictiveGrounder(Grounder):
    out_dim = 2
    architecture = RESTRICTIVE_ARCH

    def classify(self, token_ids: list[int], coord: Coordinate) -> bool:
        """True when the coordinate is judged inside the advised region."""
        logits = self.forward(token_ids, coord).numpy()
        return bool(logits[1] > logits[0])


class CorrectiveGrounder(Grounder):
    out_dim = 3
    architecture = CORRECTIVE_ARCH

    def follow(self, token_ids: list[int], coord: Coordinate) -> Coordinate:
        out = self.forward(token_ids, coord).numpy()
        return Coordinate(float(out[0]), float(out[1]), float(out[2]))


def grounder_from_arrays(arrays: dict[str, np.ndarray], meta: dict) -> Grounder:
    arch = meta.get("architecture")
    cls = {RESTRICTIVE_ARCH: RestrictiveGrounder, CORRECTIVE_ARCH: CorrectiveGrounder}.get(arch)
    if cls is None:
        raise TrainingError(f"not a grounder architecture: {arch!r}")
    model = cls(Vocab.from_json(meta["vocab"]), Rng(0))
    model.load_state_arrays(arrays)
    return model


def grounding_vocab() -> Vocab:
    """All words the train-family templates can ever produce."""
    ts = template_set("train")
    region_words = [
        "top left", "top right", "lower left", "lower right",
        "left half", "right half", "top half", "bottom half",
    ]
    region_words += [union_phrase(a, b) for a, b in _UNORDERED_PAIRS]
    cells = [cell_phrase(c, r) for c in range(GRID_CELLS) for r in range(GRID_CELLS)]
    texts: list[str] = []
    for head in Head:
        texts += [t.format(region=rw) for t in ts.restrictive[head] for rw in region_words]
        texts += [t.format(region=rw) for t in ts.union[head] for rw in region_words]
        texts += [t.format(cell=cw) for t in ts.centered[head] for cw in cells]
    texts += [t.format(direction=d.value) for t in ts.corrective for d in Direction]
    return Vocab.from_texts(texts)


@dataclass(frozen=True)
class GroundingConfig:
    train_samples: int = 500_000
    eval_samples: int = 20_000
    epochs: int = 1
    batch_size: int = 32
    lr: float = 1e-3
    # (fraction of training done, lr multiplier from there on)
    lr_decay: tuple[tuple[float, float], ...] = (
        (0.5, 0.3),
        (0.75, 0.1),
        (0.9, 0.03),
        (0.95, 0.01),
    )
    clip_norm: float = 5.0
    oov_dropout: float = 0.1
    # training-time mix over (quadrant, half, union, centered); evaluation
    # always uses the uniform mix
    kind_weights: tuple[float, float, float, float] = (0.2, 0.15, 0.3, 0.35)
    # training-time over-sampling of coordinates near the advised region's
    # boundary, where membership errors concentrate: (fraction of samples,
    # max distance to the boundary); evaluation always samples uniformly
    boundary_focus: tuple[float, float] = (0.3, 0.08)
    seed: int = 0

    def lr_at(self, fraction_done: float) -> float:
        mult = 1.0
        for frac, m in self.lr_decay:
            if fraction_done >= frac:
                mult = m
        return self.lr * mult


# the corrective objective saturates far below the restrictive sample budget
CORRECTIVE_TRAIN_SAMPLES = 60_000


def default_grounding_config(kind: str, seed: int = 0) -> GroundingConfig:
    """Calibrated per-kind defaults."""
    if kind == "corrective":
        return GroundingConfig(train_samples=CORRECTIVE_TRAIN_SAMPLES, seed=seed)
    if kind != "restrictive":
        raise ValueError(f"unknown grounding kind: {kind!r}")
    return GroundingConfig(seed=seed)


@dataclass
class RestrictiveSample:
    text: str
    regions: tuple[Region, ...]
    coord: Coordinate
    label: int  # 1 = inside


def _signed_distance(r: Region, x: float, z: float) -> float:
    """Negative inside the rectangle; magnitude = distance to its boundary."""
    dx = max(r.x_min - x, x - r.x_max)
    dz = max(r.z_min - z, z - r.z_max)
    if dx > 0.0 or dz > 0.0:
        return float(np.hypot(max(dx, 0.0), max(dz, 0.0)))
    return max(dx, dz)


def _boundary_distance(regions: tuple[Region, ...], x: float, z: float) -> float:
    # region interiors never overlap here, so the min of per-rectangle
    # signed distances is the signed distance to the union
    return abs(min(_signed_distance(r, x, z) for r in regions))


_SAMPLE_KINDS = ("quadrant", "half", "union", "centered")
_kind_cdf_cache: dict[tuple[float, float, float, float], np.ndarray] = {}


def _weighted_index(cdf: np.ndarray, rng: np.random.Generator) -> int:
    """One weighted draw; consumes a single uniform, like `Generator.choice`."""
    return int(cdf.searchsorted(rng.random(), side="right"))


def _normalized_cdf(weights: np.ndarray) -> np.ndarray:
    cdf = (weights / weights.sum()).cumsum()
    cdf /= cdf[-1]
    return cdf


def sample_restrictive(
    ts: TemplateSet,
    rng: np.random.Generator,
    kind_weights: tuple[float, float, float, float] | None = None,
    boundary_focus: tuple[float, float] | None = None,
) -> RestrictiveSample:
    """Balanced region-membership sample; kinds drawn uniformly by default."""
    if kind_weights is None:
        kind = _SAMPLE_KINDS[int(rng.integers(4))]
    else:
        cdf = _kind_cdf_cache.get(kind_weights)
        if cdf is None:
            cdf = _normalized_cdf(np.asarray(kind_weights, dtype=np.float64))
            _kind_cdf_cache[kind_weights] = cdf
        kind = _SAMPLE_KINDS[_weighted_index(cdf, rng)]
    head = Head.SOURCE if rng.integers(2) == 0 else Head.TARGET
    if kind == "quadrant":
        q = QUADRANT_ORDER[int(rng.integers(4))]
        sentence = render_restrictive(head, q, ts, rng)
        regions = restrictive_regions(q)
    elif kind == "half":
        h = list(Half)[int(rng.integers(4))]
        sentence = render_restrictive(head, h, ts, rng)
        regions = restrictive_regions(h)
    elif kind == "union":
        q1, q2 = _UNORDERED_PAIRS[int(rng.integers(len(_UNORDERED_PAIRS)))]
        sentence = render_union(head, q1, q2, ts, rng)
        regions = union_regions(q1, q2)
    else:
        col = int(rng.integers(GRID_CELLS))
        row = int(rng.integers(GRID_CELLS))
        sentence = render_centered_cell(head, col, row, ts, rng)
        regions = (centered_cell_region(col, row),)
    label = int(rng.integers(2))
    y = float(rng.uniform(0.0, 1.0))
    if boundary_focus is not None and rng.uniform() < boundary_focus[0]:
        band = boundary_focus[1]
        for _ in range(1000):
            x = float(rng.uniform(BOARD_MIN, BOARD_MAX))
            z = float(rng.uniform(BOARD_MIN, BOARD_MAX))
            c = Coordinate(x, y, z)
            if (
                any_region_contains(regions, c) == bool(label)
                and _boundary_distance(regions, x, z) <= band
            ):
                return RestrictiveSample(sentence.text, regions, c, label)
        # fall through to plain sampling when the band is unreachable
    if label == 1:
        areas = np.asarray([r.area() for r in regions])
        r = regions[_weighted_index(_normalized_cdf(areas), rng)]
        x = float(rng.uniform(r.x_min, r.x_max))
        z = float(rng.uniform(r.z_min, r.z_max))
    else:
        for _ in range(1000):
            x = float(rng.uniform(BOARD_MIN, BOARD_MAX))
            z = float(rng.uniform(BOARD_MIN, BOARD_MAX))
            if not any_region_contains(regions, Coordinate(x, y, z)):
                break
        else:
            raise TrainingError("could not sample a negative coordinate")
    return RestrictiveSample(sentence.text, regions, Coordinate(x, y, z), label)


@dataclass
class CorrectiveSample:
    text: str
    direction: Direction
    coord: Coordinate


def sample_corrective(ts: TemplateSet, rng: np.random.Generator) -> CorrectiveSample:
    d = list(Direction)[int(rng.integers(4))]
    sentence = render_corrective(d, ts, rng)
    coord = Coordinate(
        float(rng.uniform(BOARD_MIN, BOARD_MAX)),
        float(rng.uniform(0.0, 1.0)),
        float(rng.uniform(BOARD_MIN, BOARD_MAX)),
    )
    return CorrectiveSample(sentence.text, d, coord)


def satisfies_direction(pred: Coordinate, origin: Coordinate, d: Direction) -> bool:
    """Strict inequality on the advised axis; no-op outputs never satisfy."""
    if d is Direction.LEFT:
        return pred.x < origin.x
    if d is Direction.RIGHT:
        return pred.x > origin.x
    if d is Direction.DOWN:
        return pred.z < origin.z
    return pred.z > origin.z


def ghost_interval(origin: Coordinate, d: Direction) -> tuple[float, float]:
    """Uniform-sampling bounds for a coordinate that satisfies the advice.

    The interval sits GHOST_MARGIN inside the satisfying bound and spans to
    the board edge; near-edge origins slide the whole interval past the
    board so it never collapses.
    """
    if d in (Direction.LEFT, Direction.DOWN):
        bound = origin.x if d is Direction.LEFT else origin.z
        hi = bound - GHOST_MARGIN
        lo = min(BOARD_MIN, hi - GHOST_MARGIN)
        return lo, hi
    bound = origin.x if d is Direction.RIGHT else origin.z
    lo = bound + GHOST_MARGIN
    hi = max(BOARD_MAX, lo + GHOST_MARGIN)
    return lo, hi


def ghost_coordinate(origin: Coordinate, d: Direction, rng: np.random.Generator) -> Coordinate:
    lo, hi = ghost_interval(origin, d)
    v = float(rng.uniform(lo, hi))
    if d in (Direction.LEFT, Direction.RIGHT):
        return Coordinate(v, origin.y, origin.z)
    return Coordinate(origin.x, origin.y, v)


def corrective_loss(
    pred: Tensor, origin: Coordinate, d: Direction, rng: np.random.Generator
) -> Tensor | None:
    """None when the prediction already follows the advice (zero loss)."""
    p = pred.numpy()
    if satisfies_direction(Coordinate(float(p[0]), float(p[1]), float(p[2])), origin, d):
        return None
    ghost = ghost_coordinate(origin, d, rng)
    return mse_loss(pred, np.asarray(ghost.as_tuple(), dtype=np.float32))


_EncodeCache = dict[str, tuple[tuple[str, ...], tuple[int, ...]]]


def _encode_with_dropout(
    vocab: Vocab,
    text: str,
    dropout: float,
    rng: np.random.Generator,
    cache: _EncodeCache | None = None,
) -> list[int]:
    # template sentences repeat heavily, so memoize the (pure) tokenization
    if cache is None:
        words: Sequence[str] = tokenize_words(text)
        ids = vocab.encode_words(list(words))
    else:
        hit = cache.get(text)
        if hit is None:
            toks = tokenize_words(text)
            hit = (tuple(toks), tuple(vocab.encode_words(toks)))
            cache[text] = hit
        words, base = hit
        ids = list(base)
    if dropout > 0:
        for i, w in enumerate(words):
            if w not in CONTENT_WORDS and rng.random() < dropout:
                ids[i] = OOV_ID
    return ids


@dataclass
class GroundingMetrics:
    train_template_accuracy: float = 0.0
    test_template_accuracy: float = 0.0
    satisfaction_rate: float = 0.0
    loss_log: list[dict] = field(default_factory=list)


def evaluate_restrictive(
    model: RestrictiveGrounder, family: str, samples: int, rng: Rng
) -> float:
    ts = template_set(family)
    gen = rng.child(f"eval-{family}").generator
    cache: dict[str, list[int]] = {}
    correct = 0
    for _ in range(samples):
        s = sample_restrictive(ts, gen)
        ids = cache.get(s.text)
        if ids is None:
            ids = model.vocab.encode(s.text)
            cache[s.text] = ids
        if int(model.classify(ids, s.coord)) == s.label:
            correct += 1
    return correct / samples


def evaluate_corrective(
    model: CorrectiveGrounder, family: str, samples: int, rng: Rng
) -> float:
    ts = template_set(family)
    gen = rng.child(f"eval-{family}").generator
    cache: dict[str, list[int]] = {}
    ok = 0
    for _ in range(samples):
        s = sample_corrective(ts, gen)
        ids = cache.get(s.text)
        if ids is None:
            ids = model.vocab.encode(s.text)
            cache[s.text] = ids
        if satisfies_direction(model.follow(ids, s.coord), s.coord, s.direction):
            ok += 1
    return ok / samples


def pretrain_restrictive(
    config: GroundingConfig, rng: Rng
) -> tuple[RestrictiveGrounder, GroundingMetrics]:
    vocab = grounding_vocab()
    model = RestrictiveGrounder(vocab, rng.child("init"))
    return _pretrain(model, config, rng, corrective=False)


def pretrain_corrective(
    config: GroundingConfig, rng: Rng
) -> tuple[CorrectiveGrounder, GroundingMetrics]:
    vocab = grounding_vocab()
    model = CorrectiveGrounder(vocab, rng.child("init"))
    return _pretrain(model, config, rng, corrective=True)


def _pretrain(model: Grounder, config: GroundingConfig, rng: Rng, corrective: bool):
    ts = template_set("train")
    opt = Adam(model.trainable_parameters(), lr=config.lr)
    clip_params = model.lstm_parameters()
    metrics = GroundingMetrics()
    encode_cache: _EncodeCache = {}
    total = config.epochs * config.train_samples
    done = 0
    for epoch in range(config.epochs):
        gen = rng.child("samples").fork(epoch).generator
        epoch_loss = 0.0
        in_batch = 0
        seen = 0
        while seen < config.train_samples:
            if corrective:
                cs = sample_corrective(ts, gen)
                ids = _encode_with_dropout(
                    model.vocab, cs.text, config.oov_dropout, gen, encode_cache
                )
                pred = model.forward(ids, cs.coord)
                loss = corrective_loss(pred, cs.coord, cs.direction, gen)
            else:
                rs = sample_restrictive(ts, gen, config.kind_weights, config.boundary_focus)
                ids = _encode_with_dropout(
                    model.vocab, rs.text, config.oov_dropout, gen, encode_cache
                )
                loss = softmax_cross_entropy(model.forward(ids, rs.coord), rs.label)
            if loss is not None:
                epoch_loss += check_loss_finite(loss.item(), "grounding pretrain")
                backward(loss)
            seen += 1
            done += 1
            in_batch += 1
            if in_batch == config.batch_size:
                opt.lr = config.lr_at(done / total)
                apply_batch_update(opt, in_batch, clip_params, config.clip_norm)
                in_batch = 0
        if in_batch:
            opt.lr = config.lr_at(done / total)
            apply_batch_update(opt, in_batch, clip_params, config.clip_norm)
        metrics.loss_log.append(
            {"epoch": epoch, "mean_loss": epoch_loss / max(1, config.train_samples)}
        )
    if corrective:
        metrics.satisfaction_rate = evaluate_corrective(
            model, "train", config.eval_samples, rng
        )
        # for a corrective grounder, "accuracy" means satisfaction rate
        metrics.train_template_accuracy = metrics.satisfaction_rate
        metrics.test_template_accuracy = evaluate_corrective(
            model, "test", config.eval_samples, rng
        )
    else:
        metrics.train_template_accuracy = evaluate_restrictive(
            model, "train", config.eval_samples, rng
        )
        metrics.test_template_accuracy = evaluate_restrictive(
            model, "test", config.eval_samples, rng
        )
    return model, metrics
