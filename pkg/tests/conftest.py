"""Shared fixtures: a small dataset and untrained (random-weight) models.

Unit tests exercise mechanics with these toys; the acceptance suite trains
its own real models at module scope.
"""

from __future__ import annotations

import pytest

from blockadvice.advice import Head, Vocab
from blockadvice.advgen import AdviceGenerator, default_advgen_schedule
from blockadvice.data import GeneratorConfig, generate_synthetic, save_dataset
from blockadvice.grounding import (
    CorrectiveGrounder,
    GroundingConfig,
    RestrictiveGrounder,
    grounding_vocab,
)
from blockadvice.nn import Rng
from blockadvice.predictor import (
    CORRECTIVE_ARCH,
    RESTRICTIVE_ARCH,
    CoordPredictor,
    TrainSchedule,
)
from blockadvice.protocols import ModelBundle
from blockadvice.registry import ModelRegistry


@pytest.fixture(scope="session")
def toy_dataset():
    return generate_synthetic(GeneratorConfig(train=40, dev=12, test=24, seed=11))


@pytest.fixture(scope="session")
def instr_vocab(toy_dataset):
    return Vocab.from_texts([ex.instruction for ex in toy_dataset.split("train")])


@pytest.fixture(scope="session")
def ground_vocab():
    return grounding_vocab()


@pytest.fixture(scope="session")
def toy_bundle(instr_vocab, ground_vocab):
    """Random-weight models wired together; fine for protocol mechanics."""
    restrictive_grounder = RestrictiveGrounder(ground_vocab, Rng(21))
    corrective_grounder = CorrectiveGrounder(ground_vocab, Rng(22))
    return ModelBundle(
        baseline=CoordPredictor.baseline(instr_vocab, Rng(23)),
        restrictive=CoordPredictor.with_advice_branch(
            instr_vocab, restrictive_grounder, RESTRICTIVE_ARCH, Rng(24)
        ),
        corrective=CoordPredictor.with_advice_branch(
            instr_vocab, corrective_grounder, CORRECTIVE_ARCH, Rng(25)
        ),
        advgen={h: AdviceGenerator(instr_vocab, h, Rng(26)) for h in Head},
        ids={"baseline": "baseline", "restrictive": "restrictive", "corrective": "corrective",
             "advgen_source": "advgen_source", "advgen_target": "advgen_target"},
    )


@pytest.fixture(scope="session")
def toy_grounders(ground_vocab):
    return {
        "restrictive": RestrictiveGrounder(ground_vocab, Rng(21)),
        "corrective": CorrectiveGrounder(ground_vocab, Rng(22)),
    }


@pytest.fixture(scope="session")
def service_env(tmp_path_factory, toy_dataset, toy_bundle, toy_grounders):
    """Dataset file + registry directory holding the toy models."""
    root = tmp_path_factory.mktemp("service_env")
    data_path = root / "data.json"
    save_dataset(toy_dataset, data_path)
    registry = ModelRegistry(root / "models")
    schedule = TrainSchedule(kind="none", epochs=1)
    gconfig = GroundingConfig(train_samples=1, eval_samples=1)
    registry.save("baseline", toy_bundle.baseline, toy_bundle.baseline.meta(schedule, 0))
    registry.save("restrictive", toy_bundle.restrictive, toy_bundle.restrictive.meta(schedule, 0))
    registry.save("corrective", toy_bundle.corrective, toy_bundle.corrective.meta(schedule, 0))
    for head in Head:
        model = toy_bundle.advgen[head]
        registry.save(
            f"advgen_{head.value}", model, model.meta(default_advgen_schedule(), 0)
        )
    for kind, grounder in toy_grounders.items():
        registry.save(f"grounder_{kind}", grounder, grounder.meta(gconfig))
    return {"root": root, "data": data_path, "models": root / "models"}
