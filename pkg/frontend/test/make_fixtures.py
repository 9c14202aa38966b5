"""Build a tiny dataset and random-weight model registry for UI tests.

Untrained models are enough here: the end-to-end tests exercise session
mechanics and rendering, not prediction quality.
"""

import sys
from pathlib import Path

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
from blockadvice.registry import ModelRegistry


def main(root: Path) -> None:
    root.mkdir(parents=True, exist_ok=True)
    dataset = generate_synthetic(GeneratorConfig(train=24, dev=8, test=12, seed=11))
    save_dataset(dataset, root / "data.json")

    vocab = Vocab.from_texts([ex.instruction for ex in dataset.split("train")])
    gvocab = grounding_vocab()
    registry = ModelRegistry(root / "models")
    schedule = TrainSchedule(kind="none", epochs=1)
    gconfig = GroundingConfig(train_samples=1, eval_samples=1)

    restrictive_grounder = RestrictiveGrounder(gvocab, Rng(21))
    corrective_grounder = CorrectiveGrounder(gvocab, Rng(22))
    baseline = CoordPredictor.baseline(vocab, Rng(23))
    restrictive = CoordPredictor.with_advice_branch(
        vocab, restrictive_grounder, RESTRICTIVE_ARCH, Rng(24)
    )
    corrective = CoordPredictor.with_advice_branch(
        vocab, corrective_grounder, CORRECTIVE_ARCH, Rng(25)
    )

    registry.save("baseline", baseline, baseline.meta(schedule, 0))
    registry.save("restrictive", restrictive, restrictive.meta(schedule, 0))
    registry.save("corrective", corrective, corrective.meta(schedule, 0))
    for head in Head:
        model = AdviceGenerator(vocab, head, Rng(26))
        registry.save(f"advgen_{head.value}", model, model.meta(default_advgen_schedule(), 0))
    registry.save(
        "grounder_restrictive", restrictive_grounder, restrictive_grounder.meta(gconfig)
    )
    registry.save("grounder_corrective", corrective_grounder, corrective_grounder.meta(gconfig))
    print(str(root))


if __name__ == "__main__":
    main(Path(sys.argv[1]))
