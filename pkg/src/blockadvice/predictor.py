"""End-to-end coordinate predictor with an optional frozen advice branch.

The encoder is shared: instruction LSTM state plus a world-feature
projection. Each head (source, target) forms its own fusion sum; advice,
when present for a head, flows through the frozen grounding trunk and a
trainable projection into that head's sum only. Null advice contributes
nothing at all, so a no-advice forward is bitwise identical to a model
without the branch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .advice import AdviceKind, AdviceSentence, Head, Vocab, encode_advice
from .grounding import Grounder
from .nn import (
    Adam,
    Module,
    Parameter,
    Rng,
    Tensor,
    add,
    add_n,
    backward,
    embedding_lookup,
    fc_forward,
    fc_params,
    lstm_forward,
    lstm_params,
    mse_loss,
    normal_embedding,
)
from .training import TrainingError, apply_batch_update, check_loss_finite
from .world import BoardState, Coordinate, WORLD_FEATURES, direction_of, world_features

INSTR_EMBED = 100
HIDDEN = 256
ADVICE_TRUNK = 100

BASELINE_ARCH = "e2e.baseline.v1"
RESTRICTIVE_ARCH = "e2e.restrictive.v1"
CORRECTIVE_ARCH = "e2e.corrective.v1"
_ADVICE_ARCHS = (RESTRICTIVE_ARCH, CORRECTIVE_ARCH)

# grounder parameter name -> our frozen advice-branch parameter name
_TRUNK_MAP = {
    "embedding": "advice.embedding",
    "lstm.wx": "advice.lstm.wx",
    "lstm.wh": "advice.lstm.wh",
    "lstm.b": "advice.lstm.b",
    "sent.w": "advice.sent.w",
    "sent.b": "advice.sent.b",
}


@dataclass(frozen=True)
class Prediction:
    source: Coordinate
    target: Coordinate
    advice_used: dict[Head, AdviceSentence | None]

    def head_coord(self, head: Head) -> Coordinate:
        return self.source if head is Head.SOURCE else self.target


@dataclass(frozen=True)
class TrainSchedule:
    kind: str = "none"  # none | restrictive_half | corrective_two_iter
    epochs: int = 40
    epochs2: int = 15  # second iteration of corrective_two_iter
    batch_size: int = 32
    lr: float = 1e-3
    clip_norm: float = 5.0
    # gold-advice mix for restrictive_half: quadrant, union, centered
    advice_mix: tuple[float, float, float] = (0.5, 0.2, 0.3)

    def __post_init__(self) -> None:
        if self.kind not in ("none", "restrictive_half", "corrective_two_iter"):
            raise TrainingError(f"unknown schedule kind {self.kind!r}")
        if min(self.epochs, self.batch_size) <= 0 or self.lr <= 0:
            raise TrainingError("epochs, batch_size, lr must be positive")


class CoordPredictor(Module):
    def __init__(
        self,
        instr_vocab: Vocab,
        architecture: str,
        rng: Rng,
        advice_vocab: Vocab | None = None,
    ) -> None:
        if architecture not in (BASELINE_ARCH,) + _ADVICE_ARCHS:
            raise TrainingError(f"unknown predictor architecture {architecture!r}")
        super().__init__()
        self.architecture = architecture
        self.instr_vocab = instr_vocab
        self.advice_vocab = advice_vocab
        self.with_advice = architecture in _ADVICE_ARCHS
        if self.with_advice and advice_vocab is None:
            raise TrainingError(f"{architecture} needs an advice vocabulary")
        r = rng.child(architecture)
        self.register(
            normal_embedding(r.child("instr.embedding"), "instr.embedding", instr_vocab.size, INSTR_EMBED)
        )
        for p in lstm_params(r, "instr.lstm", INSTR_EMBED, HIDDEN):
            self.register(p)
        for p in fc_params(r, "world", WORLD_FEATURES, HIDDEN):
            self.register(p)
        if self.with_advice:
            assert advice_vocab is not None
            self.register(
                normal_embedding(
                    r.child("advice.embedding"), "advice.embedding", advice_vocab.size, ADVICE_TRUNK
                )
            )
            for p in lstm_params(r, "advice.lstm", ADVICE_TRUNK, HIDDEN):
                self.register(p)
            for p in fc_params(r, "advice.sent", HIDDEN, ADVICE_TRUNK):
                self.register(p)
            for name in _TRUNK_MAP.values():
                self.get_parameter(name).freeze()
            for p in fc_params(r, "advice.proj", ADVICE_TRUNK, HIDDEN):
                self.register(p)
        for p in fc_params(r, "trunk", HIDDEN, HIDDEN):
            self.register(p)
        for head in Head:
            for p in fc_params(r, f"head.{head.value}", HIDDEN, 3):
                self.register(p)

    @classmethod
    def baseline(cls, instr_vocab: Vocab, rng: Rng) -> "CoordPredictor":
        return cls(instr_vocab, BASELINE_ARCH, rng)

    @classmethod
    def with_advice_branch(
        cls, instr_vocab: Vocab, grounder: Grounder, architecture: str, rng: Rng
    ) -> "CoordPredictor":
        """Fresh predictor whose advice trunk is copied from a trained grounder."""
        model = cls(instr_vocab, architecture, rng, advice_vocab=grounder.vocab)
        for src, dst in _TRUNK_MAP.items():
            src_data = grounder.get_parameter(src).data
            dst_param = model.get_parameter(dst)
            if src_data.shape != dst_param.data.shape:
                raise TrainingError(
                    f"grounder tensor {src} shape {src_data.shape} does not fit {dst}"
                )
            dst_param.data = src_data.copy()
        return model

    def trunk_bytes(self) -> bytes:
        """Frozen advice-trunk tensors, for freeze-invariant checks."""
        if not self.with_advice:
            return b""
        return b"".join(self.get_parameter(n).data.tobytes() for n in sorted(_TRUNK_MAP.values()))

    def _advice_vector(self, token_ids: list[int]) -> Tensor:
        emb = embedding_lookup(self.get_parameter("advice.embedding"), token_ids)
        states = lstm_forward(
            self.get_parameter("advice.lstm.wx"),
            self.get_parameter("advice.lstm.wh"),
            self.get_parameter("advice.lstm.b"),
            emb,
        )
        sent = fc_forward(states.last, self.get_parameter("advice.sent.w"), self.get_parameter("advice.sent.b"))
        return fc_forward(sent, self.get_parameter("advice.proj.w"), self.get_parameter("advice.proj.b"))

    def forward(
        self,
        instr_ids: list[int],
        world_feats: np.ndarray,
        advice_ids: dict[Head, list[int] | None] | None = None,
    ) -> dict[Head, Tensor]:
        if not instr_ids:
            raise TrainingError("empty instruction")
        emb = embedding_lookup(self.get_parameter("instr.embedding"), instr_ids)
        states = lstm_forward(
            self.get_parameter("instr.lstm.wx"),
            self.get_parameter("instr.lstm.wh"),
            self.get_parameter("instr.lstm.b"),
            emb,
        )
        world_vec = fc_forward(
            Tensor(world_feats), self.get_parameter("world.w"), self.get_parameter("world.b"), "relu"
        )
        base = add(states.last, world_vec)
        out: dict[Head, Tensor] = {}
        for head in Head:
            ids = (advice_ids or {}).get(head)
            if ids:
                if not self.with_advice:
                    raise TrainingError(f"{self.architecture} cannot take advice")
                fused = add_n([base, self._advice_vector(ids)])
            else:
                fused = base
            hidden = fc_forward(fused, self.get_parameter("trunk.w"), self.get_parameter("trunk.b"), "relu")
            out[head] = fc_forward(
                hidden,
                self.get_parameter(f"head.{head.value}.w"),
                self.get_parameter(f"head.{head.value}.b"),
            )
        return out

    def predict(
        self,
        instruction: str,
        board: BoardState,
        advice: dict[Head, AdviceSentence | None] | None = None,
    ) -> Prediction:
        advice = dict(advice or {})
        ids: dict[Head, list[int] | None] = {}
        for head in Head:
            sentence = advice.get(head)
            if sentence is None or sentence.kind is AdviceKind.NULL:
                ids[head] = None
                continue
            if self.advice_vocab is None:
                raise TrainingError(f"{self.architecture} cannot take advice")
            ids[head] = encode_advice(sentence, self.advice_vocab)
        outs = self.forward(self.instr_vocab.encode(instruction), world_features(board), ids)
        coords = {h: Coordinate(*(float(v) for v in outs[h].numpy())) for h in Head}
        return Prediction(
            source=coords[Head.SOURCE],
            target=coords[Head.TARGET],
            advice_used={h: advice.get(h) for h in Head},
        )

    def instr_lstm_parameters(self) -> list[Parameter]:
        return [self.get_parameter(n) for n in ("instr.lstm.wx", "instr.lstm.wh", "instr.lstm.b")]

    def meta(self, schedule: TrainSchedule | None, seed: int) -> dict:
        out = {
            "architecture": self.architecture,
            "hyperparameters": {
                "instr_embed": INSTR_EMBED,
                "hidden": HIDDEN,
                "world_features": WORLD_FEATURES,
            },
            "vocab": self.instr_vocab.to_json(),
            "seed": seed,
        }
        if self.advice_vocab is not None:
            out["advice_vocab"] = self.advice_vocab.to_json()
        if schedule is not None:
            out["hyperparameters"].update(
                {
                    "schedule": schedule.kind,
                    "epochs": schedule.epochs,
                    "epochs2": schedule.epochs2,
                    "batch_size": schedule.batch_size,
                    "lr": schedule.lr,
                }
            )
        return out


def predictor_from_arrays(arrays: dict[str, np.ndarray], meta: dict) -> CoordPredictor:
    arch = meta.get("architecture")
    advice_vocab = Vocab.from_json(meta["advice_vocab"]) if "advice_vocab" in meta else None
    model = CoordPredictor(Vocab.from_json(meta["vocab"]), arch, Rng(0), advice_vocab)
    model.load_state_arrays(arrays)
    if model.with_advice:
        for name in _TRUNK_MAP.values():
            model.get_parameter(name).freeze()
    return model


@dataclass
class EpochLog:
    entries: list[dict] = field(default_factory=list)

    def add(self, **kv) -> None:
        self.entries.append(dict(sorted(kv.items())))


def _example_loss(
    model: CoordPredictor, ex, advice_ids: dict[Head, list[int] | None] | None
) -> Tensor:
    outs = model.forward(
        model.instr_vocab.encode(ex.instruction), world_features(ex.world), advice_ids
    )
    loss_s = mse_loss(outs[Head.SOURCE], np.asarray(ex.gold_source.as_tuple(), dtype=np.float32))
    loss_t = mse_loss(outs[Head.TARGET], np.asarray(ex.gold_target.as_tuple(), dtype=np.float32))
    return add(loss_s, loss_t)


def _run_epochs(
    model: CoordPredictor,
    examples,
    schedule: TrainSchedule,
    rng: Rng,
    epochs: int,
    advice_for,  # (epoch, index_in_dataset, example) -> advice ids dict or None
    log: EpochLog,
    phase: str,
    on_epoch_start=None,
) -> None:
    opt = Adam(model.trainable_parameters(), lr=schedule.lr)
    clip = model.instr_lstm_parameters()
    n = len(examples)
    for epoch in range(epochs):
        if on_epoch_start is not None:
            on_epoch_start(epoch)
        order = rng.child(f"{phase}.order").fork(epoch).generator.permutation(n)
        total = 0.0
        in_batch = 0
        for idx in order:
            ex = examples[int(idx)]
            loss = _example_loss(model, ex, advice_for(epoch, int(idx), ex))
            total += check_loss_finite(loss.item(), f"{phase} epoch {epoch}")
            backward(loss)
            in_batch += 1
            if in_batch == schedule.batch_size:
                apply_batch_update(opt, in_batch, clip, schedule.clip_norm)
                in_batch = 0
        if in_batch:
            apply_batch_update(opt, in_batch, clip, schedule.clip_norm)
        log.add(phase=phase, epoch=epoch, mean_loss=total / n)


def train_baseline(
    model: CoordPredictor, dataset, schedule: TrainSchedule, rng: Rng
) -> EpochLog:
    log = EpochLog()
    _run_epochs(
        model,
        dataset.split("train"),
        schedule,
        rng,
        schedule.epochs,
        lambda epoch, idx, ex: None,
        log,
        "baseline",
    )
    return log


def train_restrictive_e2e(
    model: CoordPredictor, dataset, schedule: TrainSchedule, rng: Rng
) -> EpochLog:
    """Half the examples, re-drawn each epoch, get truthful gold advice."""
    from .oracle import gold_restrictive_advice  # cycle-free: oracle imports advice/world only

    if not model.with_advice:
        raise TrainingError("restrictive schedule needs an advice-capable model")
    examples = dataset.split("train")
    n = len(examples)
    half_rng = rng.child("advised-half")
    advice_rng = rng.child("advice-render")
    log = EpochLog()
    current: dict[int, dict[Head, list[int] | None]] = {}

    def on_epoch_start(epoch: int) -> None:
        current.clear()
        chosen = half_rng.fork(epoch).generator.permutation(n)[: n // 2]
        gen = advice_rng.fork(epoch).generator
        for idx in sorted(int(i) for i in chosen):
            ex = examples[idx]
            ids: dict[Head, list[int] | None] = {}
            for head in Head:
                gold = ex.gold_source if head is Head.SOURCE else ex.gold_target
                advice = gold_restrictive_advice(gold, head, "train", gen, schedule.advice_mix)
                ids[head] = encode_advice(advice.sentence, model.advice_vocab)
            current[idx] = ids

    _run_epochs(
        model,
        examples,
        schedule,
        rng,
        schedule.epochs,
        lambda epoch, idx, ex: current.get(idx),
        log,
        "restrictive",
        on_epoch_start,
    )
    return log


def train_corrective_e2e(
    model: CoordPredictor, dataset, schedule: TrainSchedule, rng: Rng
) -> EpochLog:
    """Iteration 1: plain prediction. Iteration 2: self-correct with advice."""
    from .oracle import gold_corrective_advice

    if not model.with_advice:
        raise TrainingError("corrective schedule needs an advice-capable model")
    examples = dataset.split("train")
    log = EpochLog()
    _run_epochs(
        model, examples, schedule, rng, schedule.epochs, lambda e, i, ex: None, log, "corrective-iter1"
    )

    advice_rng = rng.child("corrective-advice")

    def advice_for(epoch: int, idx: int, ex):
        # the *current* model's unadvised prediction decides the direction
        pred = model.predict(ex.instruction, ex.world)
        gen = advice_rng.fork(epoch * len(examples) + idx).generator
        ids: dict[Head, list[int] | None] = {}
        for head in Head:
            gold = ex.gold_source if head is Head.SOURCE else ex.gold_target
            sentence = gold_corrective_advice(pred.head_coord(head), gold, "train", gen)
            ids[head] = encode_advice(sentence, model.advice_vocab) if sentence else None
        return ids

    _run_epochs(
        model, examples, schedule, rng, schedule.epochs2, advice_for, log, "corrective-iter2"
    )
    return log
