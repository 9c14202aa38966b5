"""Interactive prediction protocols as explicit state machines.

Six protocols over the same session shape: a one-shot baseline, two
human-in-the-loop protocols (restrictive region advice, corrective
direction advice), a retry protocol driven by self-generated advice, and
two fully automatic self-advice protocols (top-2 union, input-specific
centered regions). An oracle advisor simulates the human from gold labels,
and the evaluation harness replays a dataset split through any protocol.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .advice import (
    AdviceKind,
    AdviceSentence,
    Head,
    TemplateSet,
    render_centered,
    render_restrictive,
    template_set,
)
from .advgen import AdviceGenerator, RegionPrediction, make_union_advice
from .data import Dataset, Example
from .nn import Rng
from .oracle import gold_corrective_advice, gold_restrictive_advice
from .predictor import CoordPredictor, Prediction
from .world import (
    Coordinate,
    Region,
    centered_region,
    normalized_error,
    quadrant_of,
    quadrant_region,
    union_regions,
)

INPUT_SPECIFIC_SIDE = 1.0
CORRECTIVE_THRESHOLD = 1.0  # block lengths; oracle advises above this


class ProtocolError(Exception):
    """Illegal event for the session's current state."""

    def __init__(self, message: str, expected: tuple[str, ...] = ()) -> None:
        super().__init__(message)
        self.expected = expected


class ProtocolKind(Enum):
    BASELINE = "baseline"
    RESTRICTIVE = "restrictive"
    CORRECTIVE = "corrective"
    RETRY = "retry"
    SELFGEN_UNION = "selfgen_union"
    SELFGEN_INPUT_SPECIFIC = "selfgen_input_specific"


class Phase(Enum):
    AWAITING_PREDICT = "awaiting_predict"
    AWAITING_FEEDBACK = "awaiting_feedback"
    DONE = "done"


class EventKind(Enum):
    NONE = "none"
    RESTRICTIVE_ADVICE = "restrictive_advice"
    CORRECTIVE_ADVICE = "corrective_advice"
    RETRY = "retry"
    ACCEPT = "accept"


_ADVICE_EVENT_KINDS = frozenset({EventKind.RESTRICTIVE_ADVICE, EventKind.CORRECTIVE_ADVICE})

# which trained predictor serves each protocol (the advice-trained model
# covers retry and both self-advice protocols) and which protocols need
# the region-advice generators
PREDICTOR_ROLE = {
    ProtocolKind.BASELINE: "baseline",
    ProtocolKind.RESTRICTIVE: "restrictive",
    ProtocolKind.CORRECTIVE: "corrective",
    ProtocolKind.RETRY: "restrictive",
    ProtocolKind.SELFGEN_UNION: "restrictive",
    ProtocolKind.SELFGEN_INPUT_SPECIFIC: "restrictive",
}
ADVGEN_PROTOCOLS = frozenset({ProtocolKind.RETRY, ProtocolKind.SELFGEN_UNION})

_SENTENCE_KINDS = {
    EventKind.RESTRICTIVE_ADVICE: frozenset(
        {AdviceKind.RESTRICTIVE, AdviceKind.UNION, AdviceKind.CENTERED}
    ),
    EventKind.CORRECTIVE_ADVICE: frozenset({AdviceKind.CORRECTIVE}),
}


@dataclass(frozen=True)
class AdvisorEvent:
    """One advisor turn; sentences are per-head (a head may go unadvised)."""

    kind: EventKind
    sentences: Mapping[Head, AdviceSentence] = field(default_factory=dict)
    # retry only: heads to re-advise with the second-choice region
    # (empty = all heads)
    heads: tuple[Head, ...] = ()

    def __post_init__(self) -> None:
        if self.kind in _ADVICE_EVENT_KINDS:
            if not self.sentences:
                raise ProtocolError(f"{self.kind.value} event requires at least one sentence")
            allowed = _SENTENCE_KINDS[self.kind]
            for head, sentence in self.sentences.items():
                if sentence.kind not in allowed:
                    raise ProtocolError(
                        f"{sentence.kind.value} sentence not allowed in a "
                        f"{self.kind.value} event ({head.value})"
                    )
        elif self.sentences:
            raise ProtocolError(f"{self.kind.value} event cannot carry sentences")
        if self.heads and self.kind is not EventKind.RETRY:
            raise ProtocolError("per-head selection applies to retry events only")

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "sentences": {h.value: s.text for h, s in self.sentences.items()},
            "heads": [h.value for h in self.heads],
        }


@dataclass
class Turn:
    prediction: Prediction
    event: AdvisorEvent | None = None


@dataclass
class ProtocolModels:
    """Models a protocol needs at session time; ids are for reporting."""

    predictor: CoordPredictor
    advgen: Mapping[Head, AdviceGenerator] | None = None
    ids: Mapping[str, str] = field(default_factory=dict)


@dataclass
class Session:
    id: str
    protocol: ProtocolKind
    example: Example
    phase: Phase = Phase.AWAITING_PREDICT
    history: list[Turn] = field(default_factory=list)
    model_ids: dict[str, str] = field(default_factory=dict)
    retry_used: bool = False
    region_preds: dict[Head, RegionPrediction] | None = None
    # machine-issued advice regions, for display (human free text has none)
    advice_regions: dict[Head, tuple[Region, ...]] = field(default_factory=dict)

    @property
    def predictions(self) -> list[Prediction]:
        return [t.prediction for t in self.history]

    def to_json(self) -> dict:
        out = {
            "session_id": self.id,
            "protocol": self.protocol.value,
            "phase": self.phase.value,
            "example": _example_json(self.example),
            "history": [
                {
                    "prediction": _prediction_json(t.prediction),
                    "event": t.event.to_json() if t.event is not None else None,
                }
                for t in self.history
            ],
            "models": dict(self.model_ids),
            "retry_used": self.retry_used,
            "advice_regions": {
                h.value: [_region_json(r) for r in rs] for h, rs in self.advice_regions.items()
            },
            "expected_events": list(expected_events(self)),
        }
        if self.region_preds is not None:
            out["region_predictions"] = {
                h.value: {
                    "probs": [float(p) for p in rp.probs],
                    "top1": rp.top1.value,
                    "top2": rp.top2.value,
                }
                for h, rp in self.region_preds.items()
            }
        return out


def _coord_json(c: Coordinate) -> list[float]:
    return [c.x, c.y, c.z]


def _region_json(r: Region) -> dict:
    return {"x_min": r.x_min, "x_max": r.x_max, "z_min": r.z_min, "z_max": r.z_max}


def _example_json(ex: Example) -> dict:
    return {
        "id": ex.id,
        "instruction": ex.instruction,
        "world": {
            "blocks": [_coord_json(b) for b in ex.world.blocks],
            "block_length": ex.world.block_length,
        },
        "source_index": ex.source_index,
        "gold_source": _coord_json(ex.gold_source),
        "gold_target": _coord_json(ex.gold_target),
    }


def _prediction_json(p: Prediction) -> dict:
    return {
        "source": _coord_json(p.source),
        "target": _coord_json(p.target),
        "advice_used": {
            h.value: (s.text if s is not None else None) for h, s in p.advice_used.items()
        },
    }


def expected_events(session: Session) -> tuple[str, ...]:
    """Event kinds the session will accept next (empty when terminal)."""
    if session.phase is not Phase.AWAITING_FEEDBACK:
        return ()
    return {
        ProtocolKind.RESTRICTIVE: ("restrictive_advice", "accept"),
        ProtocolKind.CORRECTIVE: ("corrective_advice", "accept"),
        ProtocolKind.RETRY: ("retry", "accept"),
    }.get(session.protocol, ())


def _input_specific_advice(
    coord: Coordinate, head: Head, ts: TemplateSet, rng: np.random.Generator
) -> tuple[Region, AdviceSentence]:
    region = centered_region(coord, INPUT_SPECIFIC_SIDE)
    return region, render_centered(head, region, ts, rng)


def start_session(
    session_id: str,
    protocol: ProtocolKind,
    example: Example,
    models: ProtocolModels,
    rng: np.random.Generator,
    selfgen_family: str = "train",
) -> Session:
    """Create a session and run its automatic prefix.

    Baseline and the self-advice protocols finish immediately; the
    interactive protocols stop at AwaitingFeedback after the first
    prediction.
    """
    s = Session(id=session_id, protocol=protocol, example=example, model_ids=dict(models.ids))
    predictor = models.predictor
    instruction, world = example.instruction, example.world
    ts = template_set(selfgen_family)

    if protocol is ProtocolKind.BASELINE:
        s.history.append(Turn(predictor.predict(instruction, world)))
        s.phase = Phase.DONE
    elif protocol in (ProtocolKind.RESTRICTIVE, ProtocolKind.CORRECTIVE):
        s.history.append(Turn(predictor.predict(instruction, world)))
        s.phase = Phase.AWAITING_FEEDBACK
    elif protocol is ProtocolKind.RETRY:
        if models.advgen is None:
            raise ProtocolError("retry protocol requires region-advice generators")
        s.region_preds = {
            h: models.advgen[h].predict_region(instruction, world) for h in Head
        }
        advice = {
            h: render_restrictive(h, s.region_preds[h].top1, ts, rng) for h in Head
        }
        s.advice_regions = {h: (quadrant_region(s.region_preds[h].top1),) for h in Head}
        s.history.append(Turn(predictor.predict(instruction, world, advice)))
        s.phase = Phase.AWAITING_FEEDBACK
    elif protocol is ProtocolKind.SELFGEN_UNION:
        if models.advgen is None:
            raise ProtocolError("union self-advice requires region-advice generators")
        rps = {h: models.advgen[h].predict_region(instruction, world) for h in Head}
        advice = {h: make_union_advice(rps[h], h, ts, rng) for h in Head}
        s.region_preds = rps
        s.advice_regions = {h: union_regions(rps[h].top1, rps[h].top2) for h in Head}
        s.history.append(Turn(predictor.predict(instruction, world, advice)))
        s.phase = Phase.DONE
    elif protocol is ProtocolKind.SELFGEN_INPUT_SPECIFIC:
        first = predictor.predict(instruction, world)
        advice: dict[Head, AdviceSentence] = {}
        for h in Head:
            region, sentence = _input_specific_advice(first.head_coord(h), h, ts, rng)
            advice[h] = sentence
            s.advice_regions[h] = (region,)
        event = AdvisorEvent(EventKind.RESTRICTIVE_ADVICE, advice)
        s.history.append(Turn(first, event))
        s.history.append(Turn(predictor.predict(instruction, world, advice)))
        s.phase = Phase.DONE
    else:  # pragma: no cover - enum is closed
        raise ProtocolError(f"unknown protocol {protocol}")
    return s


def step(
    session: Session,
    models: ProtocolModels,
    event: AdvisorEvent,
    rng: np.random.Generator,
    selfgen_family: str = "train",
) -> Session:
    """Apply one advisor event; Done sessions reject everything."""
    expected = expected_events(session)
    if event.kind.value not in expected:
        raise ProtocolError(
            f"event {event.kind.value!r} not legal for {session.protocol.value} "
            f"session in phase {session.phase.value}",
            expected=expected,
        )
    predictor = models.predictor
    example = session.example

    if event.kind is EventKind.ACCEPT:
        session.history[-1].event = event
        session.phase = Phase.DONE
        return session

    if event.kind in _ADVICE_EVENT_KINDS:
        advice = {h: event.sentences.get(h) for h in Head}
        session.history[-1].event = event
        session.history.append(
            Turn(predictor.predict(example.instruction, example.world, advice))
        )
        session.phase = Phase.DONE
        return session

    # retry: second-choice region advice for the named heads, first-round
    # advice kept verbatim for the rest
    assert event.kind is EventKind.RETRY and session.region_preds is not None
    ts = template_set(selfgen_family)
    heads = event.heads or tuple(Head)
    first_advice = session.history[0].prediction.advice_used
    advice = {}
    for h in Head:
        if h in heads:
            advice[h] = render_restrictive(h, session.region_preds[h].top2, ts, rng)
            session.advice_regions[h] = (quadrant_region(session.region_preds[h].top2),)
        else:
            advice[h] = first_advice[h]
    session.history[-1].event = event
    session.history.append(Turn(predictor.predict(example.instruction, example.world, advice)))
    session.retry_used = True
    session.phase = Phase.DONE
    return session


# ---------------------------------------------------------------------------
# Oracle advisor


def oracle_advise(
    protocol: ProtocolKind,
    prediction: Prediction,
    gold: Coordinate,
    head: Head,
    rng: np.random.Generator,
    block_length: float,
    family: str = "test",
    always: bool = False,
    threshold: float = CORRECTIVE_THRESHOLD,
) -> AdvisorEvent:
    """Simulated human feedback for one head of one prediction."""
    pred = prediction.head_coord(head)
    if protocol is ProtocolKind.RESTRICTIVE:
        if always or quadrant_of(pred) != quadrant_of(gold):
            advice = gold_restrictive_advice(gold, head, family, rng)
            return AdvisorEvent(EventKind.RESTRICTIVE_ADVICE, {head: advice.sentence})
        return AdvisorEvent(EventKind.ACCEPT)
    if protocol is ProtocolKind.CORRECTIVE:
        if always or normalized_error(pred, gold, block_length) > threshold:
            sentence = gold_corrective_advice(pred, gold, family, rng)
            if sentence is not None:
                return AdvisorEvent(EventKind.CORRECTIVE_ADVICE, {head: sentence})
        return AdvisorEvent(EventKind.ACCEPT)
    if protocol is ProtocolKind.RETRY:
        if always or quadrant_of(pred) != quadrant_of(gold):
            return AdvisorEvent(EventKind.RETRY, heads=(head,))
        return AdvisorEvent(EventKind.ACCEPT)
    raise ProtocolError(f"protocol {protocol.value} takes no oracle feedback")


def _merge_events(events: Iterable[AdvisorEvent]) -> AdvisorEvent:
    """Join per-head oracle events into the single event a session takes."""
    sentences: dict[Head, AdviceSentence] = {}
    heads: tuple[Head, ...] = ()
    kind = EventKind.ACCEPT
    for e in events:
        if e.kind is EventKind.ACCEPT:
            continue
        kind = e.kind
        sentences.update(e.sentences)
        heads = heads + e.heads
    return AdvisorEvent(kind, sentences, heads)


def oracle_event(
    session: Session,
    rng: np.random.Generator,
    family: str = "test",
    always: bool = False,
    threshold: float = CORRECTIVE_THRESHOLD,
) -> AdvisorEvent:
    """What the oracle says about the session's latest prediction."""
    ex = session.example
    prediction = session.history[-1].prediction
    return _merge_events(
        oracle_advise(
            session.protocol,
            prediction,
            ex.gold_source if h is Head.SOURCE else ex.gold_target,
            h,
            rng,
            ex.world.block_length,
            family=family,
            always=always,
            threshold=threshold,
        )
        for h in Head
    )


# ---------------------------------------------------------------------------
# Evaluation harness


@dataclass(frozen=True)
class HeadStats:
    mean: float
    median: float

    def to_json(self) -> dict:
        return {"mean": self.mean, "median": self.median}


@dataclass(frozen=True)
class EvalReport:
    protocol: str
    models: dict[str, str]
    source: HeadStats
    target: HeadStats
    advice_given: int
    total: int
    seed: int

    def __post_init__(self) -> None:
        if not 0 <= self.advice_given <= self.total:
            raise ValueError("advice_given must lie in [0, total]")

    def to_json(self) -> dict:
        return {
            "protocol": self.protocol,
            "models": dict(self.models),
            "source": self.source.to_json(),
            "target": self.target.to_json(),
            "advice_given": self.advice_given,
            "total": self.total,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, data: dict) -> "EvalReport":
        return cls(
            protocol=data["protocol"],
            models=dict(data["models"]),
            source=HeadStats(**data["source"]),
            target=HeadStats(**data["target"]),
            advice_given=data["advice_given"],
            total=data["total"],
            seed=data["seed"],
        )


_HEAD_STATS_SCHEMA = {
    "type": "object",
    "required": ["mean", "median"],
    "properties": {"mean": {"type": "number"}, "median": {"type": "number"}},
    "additionalProperties": False,
}

EVAL_REPORT_SCHEMA = {
    "type": "object",
    "required": ["protocol", "models", "source", "target", "advice_given", "total", "seed"],
    "properties": {
        "protocol": {"enum": [k.value for k in ProtocolKind]},
        "models": {"type": "object", "additionalProperties": {"type": "string"}},
        "source": _HEAD_STATS_SCHEMA,
        "target": _HEAD_STATS_SCHEMA,
        "advice_given": {"type": "integer", "minimum": 0},
        "total": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}

ACCURACY_ROW_SCHEMA = {
    "type": "object",
    "required": ["head", "top1", "top2_coverage", "input_specific_rate"],
    "properties": {
        "head": {"enum": [h.value for h in Head]},
        "top1": {"type": "number"},
        "top2_coverage": {"type": "number"},
        "input_specific_rate": {"type": "number"},
    },
    "additionalProperties": False,
}

COMPARE_REPORT_SCHEMA = {
    "type": "object",
    "required": ["protocols", "accuracy", "seed"],
    "properties": {
        "protocols": {
            "type": "array",
            "items": EVAL_REPORT_SCHEMA,
            "minItems": len(ProtocolKind),
            "maxItems": len(ProtocolKind),
        },
        "accuracy": {
            "type": "array",
            "items": ACCURACY_ROW_SCHEMA,
            "minItems": 2,
            "maxItems": 2,
        },
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}


@dataclass(frozen=True)
class EvalConfig:
    split: str = "test"
    oracle_family: str = "test"
    selfgen_family: str = "train"
    always_advice: bool = False
    # evaluate the advice-trained model with advice withheld (the
    # advice-at-train-time-only configuration)
    train_advice_only: bool = False
    corrective_threshold: float = CORRECTIVE_THRESHOLD


def _used_advice(session: Session) -> bool:
    if any(
        t.event is not None and t.event.kind is not EventKind.ACCEPT for t in session.history
    ):
        return True
    final = session.history[-1].prediction
    return any(final.advice_used[h] is not None for h in Head)


def run_eval(
    protocol: ProtocolKind,
    dataset: Dataset,
    models: ProtocolModels,
    seed: int,
    config: EvalConfig = EvalConfig(),
) -> EvalReport:
    """Replay a split through a protocol with the oracle advisor.

    Pure in (models, dataset, seed, config): repeated calls produce
    identical reports.
    """
    examples = dataset.split(config.split)
    rng = Rng(seed).child(f"eval.{protocol.value}")
    errors: dict[Head, list[float]] = {h: [] for h in Head}
    advice_given = 0
    for i, ex in enumerate(examples):
        gen = rng.fork(i).generator
        if config.train_advice_only:
            final = models.predictor.predict(ex.instruction, ex.world)
        else:
            s = start_session(
                ex.id, protocol, ex, models, gen, selfgen_family=config.selfgen_family
            )
            if s.phase is Phase.AWAITING_FEEDBACK:
                event = oracle_event(
                    s,
                    gen,
                    family=config.oracle_family,
                    always=config.always_advice,
                    threshold=config.corrective_threshold,
                )
                step(s, models, event, gen, selfgen_family=config.selfgen_family)
            advice_given += int(_used_advice(s))
            final = s.history[-1].prediction
        for h in Head:
            gold = ex.gold_source if h is Head.SOURCE else ex.gold_target
            errors[h].append(normalized_error(final.head_coord(h), gold, ex.world.block_length))
    stats = {
        h: HeadStats(
            mean=float(np.mean(errors[h])) if errors[h] else 0.0,
            median=float(np.median(errors[h])) if errors[h] else 0.0,
        )
        for h in Head
    }
    return EvalReport(
        protocol=protocol.value,
        models=dict(models.ids),
        source=stats[Head.SOURCE],
        target=stats[Head.TARGET],
        advice_given=advice_given,
        total=len(examples),
        seed=seed,
    )


@dataclass(frozen=True)
class AccuracyRow:
    head: str
    top1: float
    top2_coverage: float
    input_specific_rate: float

    def to_json(self) -> dict:
        return {
            "head": self.head,
            "top1": self.top1,
            "top2_coverage": self.top2_coverage,
            "input_specific_rate": self.input_specific_rate,
        }


@dataclass
class ModelBundle:
    """Everything a full protocol comparison needs."""

    baseline: CoordPredictor
    restrictive: CoordPredictor
    corrective: CoordPredictor
    advgen: Mapping[Head, AdviceGenerator]
    ids: dict[str, str] = field(default_factory=dict)

    def for_protocol(self, protocol: ProtocolKind) -> ProtocolModels:
        predictor = getattr(self, PREDICTOR_ROLE[protocol])
        advgen = self.advgen if protocol in ADVGEN_PROTOCOLS else None
        return ProtocolModels(predictor=predictor, advgen=advgen, ids=self.ids)


@dataclass(frozen=True)
class CompareReport:
    protocols: tuple[EvalReport, ...]
    accuracy: tuple[AccuracyRow, AccuracyRow]
    seed: int

    def to_json(self) -> dict:
        return {
            "protocols": [r.to_json() for r in self.protocols],
            "accuracy": [a.to_json() for a in self.accuracy],
            "seed": self.seed,
        }

    def render_table(self) -> str:
        """Human-readable comparison: error stats per protocol, then the
        region-advice accuracy block."""
        lines = [
            f"{'protocol':<24} {'src med':>8} {'src mean':>9} "
            f"{'tgt med':>8} {'tgt mean':>9} {'advice':>12}",
        ]
        for r in self.protocols:
            lines.append(
                f"{r.protocol:<24} {r.source.median:>8.2f} {r.source.mean:>9.2f} "
                f"{r.target.median:>8.2f} {r.target.mean:>9.2f} "
                f"{r.advice_given:>5d}/{r.total:<6d}"
            )
        lines.append("")
        lines.append(
            f"{'region advice':<24} {'top-1':>8} {'top-2 cov':>10} {'input-specific':>15}"
        )
        for a in self.accuracy:
            lines.append(
                f"{a.head:<24} {a.top1:>8.2%} {a.top2_coverage:>10.2%} "
                f"{a.input_specific_rate:>15.2%}"
            )
        return "\n".join(lines)


def input_specific_hit_rate(
    predictor: CoordPredictor, examples: Iterable[Example], head: Head
) -> float:
    """Fraction of examples whose gold lands in the pass-1 centered region."""
    hits = 0
    total = 0
    for ex in examples:
        pred = predictor.predict(ex.instruction, ex.world)
        region = centered_region(pred.head_coord(head), INPUT_SPECIFIC_SIDE)
        gold = ex.gold_source if head is Head.SOURCE else ex.gold_target
        hits += int(region.x_min <= gold.x <= region.x_max and region.z_min <= gold.z <= region.z_max)
        total += 1
    return hits / max(1, total)


COMPARE_ORDER = (
    ProtocolKind.BASELINE,
    ProtocolKind.RESTRICTIVE,
    ProtocolKind.CORRECTIVE,
    ProtocolKind.RETRY,
    ProtocolKind.SELFGEN_UNION,
    ProtocolKind.SELFGEN_INPUT_SPECIFIC,
)


def compare_protocols(
    dataset: Dataset,
    bundle: ModelBundle,
    seed: int,
    config: EvalConfig = EvalConfig(),
) -> CompareReport:
    """All six protocols plus the region-advice accuracy block."""
    from .advgen import top1_accuracy, top2_coverage

    reports = tuple(
        run_eval(p, dataset, bundle.for_protocol(p), seed, config) for p in COMPARE_ORDER
    )
    examples = dataset.split(config.split)
    accuracy = tuple(
        AccuracyRow(
            head=h.value,
            top1=top1_accuracy(bundle.advgen[h], examples),
            top2_coverage=top2_coverage(bundle.advgen[h], examples),
            input_specific_rate=input_specific_hit_rate(bundle.restrictive, examples, h),
        )
        for h in (Head.SOURCE, Head.TARGET)
    )
    return CompareReport(protocols=reports, accuracy=accuracy, seed=seed)


def report_to_json_bytes(report: EvalReport | CompareReport) -> bytes:
    """Canonical serialization: sorted keys, newline-terminated."""
    return (json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n").encode("utf-8")
