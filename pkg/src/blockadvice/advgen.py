"""Self-generated advice: region classification and input-specific regions.

A region classifier per head predicts the quadrant of the gold coordinate
from the instruction and world alone. Its top-1 choice drives self-advice;
its top-2 set drives union advice; and a trained predictor's own first-pass
prediction drives centered input-specific advice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .advice import AdviceSentence, Head, TemplateSet, Vocab, render_centered, render_union
from .data import Example
from .nn import (
    Adam,
    Module,
    Rng,
    Tensor,
    backward,
    concat,
    embedding_lookup,
    fc_forward,
    fc_params,
    lstm_forward,
    lstm_params,
    normal_embedding,
    softmax_cross_entropy,
    softmax_probs,
)
from .predictor import CoordPredictor, EpochLog, TrainSchedule
from .training import TrainingError, apply_batch_update, check_loss_finite
from .world import (
    BoardState,
    Coordinate,
    QUADRANT_ORDER,
    Quadrant,
    Region,
    WORLD_FEATURES,
    centered_region,
    quadrant_of,
    world_features,
)

EMBED_DIM = 256
HIDDEN = 256
WORLD_DIM = 20

INPUT_SPECIFIC_SIDE = 1.0  # same area as one quadrant


def advgen_architecture(head: Head) -> str:
    return f"advgen.{head.value}.v1"


@dataclass(frozen=True)
class RegionPrediction:
    probs: np.ndarray  # float64 [4], ordered like QUADRANT_ORDER
    top1: Quadrant
    top2: Quadrant


class AdviceGenerator(Module):
    def __init__(self, instr_vocab: Vocab, head: Head, rng: Rng) -> None:
        super().__init__()
        self.instr_vocab = instr_vocab
        self.head = head
        self.architecture = advgen_architecture(head)
        r = rng.child(self.architecture)
        self.register(
            normal_embedding(r.child("embedding"), "embedding", instr_vocab.size, EMBED_DIM)
        )
        for p in lstm_params(r, "lstm", EMBED_DIM, HIDDEN):
            self.register(p)
        for p in fc_params(r, "world", WORLD_FEATURES, WORLD_DIM):
            self.register(p)
        for p in fc_params(r, "out", HIDDEN + WORLD_DIM, len(QUADRANT_ORDER)):
            self.register(p)

    def logits(self, instr_ids: list[int], world_feats: np.ndarray) -> Tensor:
        if not instr_ids:
            raise TrainingError("empty instruction")
        emb = embedding_lookup(self.get_parameter("embedding"), instr_ids)
        states = lstm_forward(
            self.get_parameter("lstm.wx"),
            self.get_parameter("lstm.wh"),
            self.get_parameter("lstm.b"),
            emb,
        )
        world_vec = fc_forward(
            Tensor(world_feats),
            self.get_parameter("world.w"),
            self.get_parameter("world.b"),
            "leaky_relu",
        )
        return fc_forward(
            concat(states.last, world_vec),
            self.get_parameter("out.w"),
            self.get_parameter("out.b"),
        )

    def predict_region(self, instruction: str, board: BoardState) -> RegionPrediction:
        """Softmax over quadrants; ties broken by the fixed quadrant order."""
        ids = self.instr_vocab.encode(instruction)
        probs = softmax_probs(self.logits(ids, world_features(board)).numpy())
        ranked = np.argsort(-probs, kind="stable")
        return RegionPrediction(
            probs=probs,
            top1=QUADRANT_ORDER[int(ranked[0])],
            top2=QUADRANT_ORDER[int(ranked[1])],
        )

    def lstm_parameters(self):
        return [self.get_parameter(n) for n in ("lstm.wx", "lstm.wh", "lstm.b")]

    def meta(self, schedule: TrainSchedule | None, seed: int) -> dict:
        out = {
            "architecture": self.architecture,
            "hyperparameters": {
                "embed_dim": EMBED_DIM,
                "hidden": HIDDEN,
                "world_dim": WORLD_DIM,
            },
            "vocab": self.instr_vocab.to_json(),
            "seed": seed,
        }
        if schedule is not None:
            out["hyperparameters"].update(
                {"epochs": schedule.epochs, "batch_size": schedule.batch_size, "lr": schedule.lr}
            )
        return out


def advgen_from_arrays(arrays: dict[str, np.ndarray], meta: dict) -> AdviceGenerator:
    arch = meta.get("architecture")
    head = next((h for h in Head if advgen_architecture(h) == arch), None)
    if head is None:
        raise TrainingError(f"not an advice-generator architecture: {arch!r}")
    model = AdviceGenerator(Vocab.from_json(meta["vocab"]), head, Rng(0))
    model.load_state_arrays(arrays)
    return model


def _gold_coord(ex: Example, head: Head) -> Coordinate:
    return ex.gold_source if head is Head.SOURCE else ex.gold_target


def gold_label(ex: Example, head: Head) -> int:
    return QUADRANT_ORDER.index(quadrant_of(_gold_coord(ex, head)))


def default_advgen_schedule() -> TrainSchedule:
    return TrainSchedule(kind="none", epochs=40, lr=1e-4)


def train_advgen(
    model: AdviceGenerator, dataset, schedule: TrainSchedule, rng: Rng
) -> tuple[EpochLog, float]:
    """Cross-entropy training on gold-quadrant labels; returns dev accuracy."""
    examples = dataset.split("train")
    opt = Adam(model.trainable_parameters(), lr=schedule.lr)
    clip = model.lstm_parameters()
    log = EpochLog()
    n = len(examples)
    for epoch in range(schedule.epochs):
        order = rng.child("order").fork(epoch).generator.permutation(n)
        total = 0.0
        in_batch = 0
        for idx in order:
            ex = examples[int(idx)]
            loss = softmax_cross_entropy(
                model.logits(model.instr_vocab.encode(ex.instruction), world_features(ex.world)),
                gold_label(ex, model.head),
            )
            total += check_loss_finite(loss.item(), f"advgen epoch {epoch}")
            backward(loss)
            in_batch += 1
            if in_batch == schedule.batch_size:
                apply_batch_update(opt, in_batch, clip, schedule.clip_norm)
                in_batch = 0
        if in_batch:
            apply_batch_update(opt, in_batch, clip, schedule.clip_norm)
        log.add(phase=f"advgen-{model.head.value}", epoch=epoch, mean_loss=total / n)
    return log, top1_accuracy(model, dataset.split("dev"))


def top1_accuracy(model: AdviceGenerator, examples) -> float:
    hits = sum(
        1
        for ex in examples
        if model.predict_region(ex.instruction, ex.world).top1
        == quadrant_of(_gold_coord(ex, model.head))
    )
    return hits / max(1, len(examples))


def top2_coverage(model: AdviceGenerator, examples) -> float:
    hits = 0
    for ex in examples:
        rp = model.predict_region(ex.instruction, ex.world)
        if quadrant_of(_gold_coord(ex, model.head)) in (rp.top1, rp.top2):
            hits += 1
    return hits / max(1, len(examples))


def make_union_advice(
    rp: RegionPrediction, head: Head, ts: TemplateSet, rng: np.random.Generator
) -> AdviceSentence:
    return render_union(head, rp.top1, rp.top2, ts, rng)


def make_input_specific_advice(
    predictor: CoordPredictor,
    example: Example,
    ts: TemplateSet,
    rng: np.random.Generator,
    head: Head,
) -> tuple[Region, AdviceSentence]:
    """First-pass prediction -> quadrant-sized region centered on it.

    The returned region is the exact centered square; the sentence names its
    grid-snapped cell (at most 0.125 off per axis).
    """
    pass1 = predictor.predict(example.instruction, example.world)
    region = centered_region(pass1.head_coord(head), INPUT_SPECIFIC_SIDE)
    return region, render_centered(head, region, ts, rng)
