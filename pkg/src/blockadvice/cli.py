"""Command-line entry points: data generation, training, evaluation, serving.

Every verb honors ``--seed`` and writes deterministic artifacts: weight
files with JSON sidecars, JSONL training logs, and canonical JSON reports.
Usage errors exit 2 (argparse); runtime failures exit 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import advgen as advgen_mod
from . import grounding, predictor as predictor_mod
from .advice import Head, TemplateError, TokenizeError, Vocab
from .data import DataError, Dataset, GenerationError, GeneratorConfig, dataset_stats, \
    generate_synthetic, instruction_texts, load_dataset, save_dataset
from .nn import NNError, Rng
from .protocols import (
    EvalConfig,
    ProtocolError,
    ProtocolKind,
    compare_protocols,
    report_to_json_bytes,
    run_eval,
)
from .registry import DEFAULT_MODEL_IDS, ModelRegistry, RegistryError, load_bundle, \
    load_protocol_models
from .training import TrainingError, write_train_log
from .world import GeometryError

_FAILURES = (
    DataError,
    GenerationError,
    GeometryError,
    NNError,
    ProtocolError,
    RegistryError,
    TemplateError,
    TokenizeError,
    TrainingError,
    OSError,
    ValueError,
)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="root random seed")


def _add_models_dir(p: argparse.ArgumentParser) -> None:
    p.add_argument("--models", default="models", help="model registry directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockadvice",
        description="Interactive advice protocols for block placement prediction.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output dataset JSON path")
    p.add_argument("--train", type=int, default=GeneratorConfig.train)
    p.add_argument("--dev", type=int, default=GeneratorConfig.dev)
    p.add_argument("--test", type=int, default=GeneratorConfig.test)
    p.add_argument("--block-length", type=float, default=GeneratorConfig.block_length)
    _add_common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pretrain-grounding", help="pretrain an advice grounding network")
    p.add_argument("kind", choices=["restrictive", "corrective"])
    p.add_argument("--samples", type=int, default=None, help="training samples")
    p.add_argument("--eval-samples", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--name", default=None, help="model id (default grounder_<kind>)")
    _add_models_dir(p)
    _add_common(p)
    p.set_defaults(func=cmd_pretrain_grounding)

    p = sub.add_parser("train", help="train a predictor or advice generator")
    p.add_argument("kind", choices=["baseline", "restrictive", "corrective", "advgen"])
    p.add_argument("--data", required=True, help="dataset JSON path")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--epochs2", type=int, default=None,
                   help="second-iteration epochs (corrective only)")
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--grounder", default=None,
                   help="grounder model id (restrictive/corrective only)")
    p.add_argument("--head", choices=["source", "target", "both"], default="both",
                   help="which region generators to train (advgen only)")
    p.add_argument("--name", default=None, help="model id (default = kind)")
    _add_models_dir(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate one protocol with the oracle advisor")
    p.add_argument("--protocol", required=True, choices=[k.value for k in ProtocolKind])
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--always-advice", action="store_true",
                   help="oracle advises every example, not only wrong-region ones")
    p.add_argument("--train-advice-only", action="store_true",
                   help="withhold advice at evaluation time")
    p.add_argument("--out", default=None, help="also write the report JSON here")
    _add_models_dir(p)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="evaluate all six protocols plus advice accuracy")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--always-advice", action="store_true")
    p.add_argument("--train-advice-only", action="store_true")
    p.add_argument("--out", default=None, help="also write the report JSON here")
    _add_models_dir(p)
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("serve", help="serve the interactive session API")
    p.add_argument("--data", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--static", default=None, help="UI asset directory to serve at /")
    p.add_argument("--log", default=None, help="append-only session event log (JSONL)")
    _add_models_dir(p)
    _add_common(p)
    p.set_defaults(func=cmd_serve)

    return parser


def cmd_gen_data(args) -> int:
    config = GeneratorConfig(
        train=args.train, dev=args.dev, test=args.test,
        block_length=args.block_length, seed=args.seed,
    )
    dataset = generate_synthetic(config)
    save_dataset(dataset, args.out)
    print(json.dumps(dataset_stats(dataset), indent=2, sort_keys=True))
    return 0


def cmd_pretrain_grounding(args) -> int:
    from dataclasses import replace

    config = grounding.default_grounding_config(args.kind, seed=args.seed)
    overrides = {
        "train_samples": args.samples,
        "eval_samples": args.eval_samples,
        "batch_size": args.batch,
        "lr": args.lr,
    }
    config = replace(config, **{k: v for k, v in overrides.items() if v is not None})
    pretrain = {
        "restrictive": grounding.pretrain_restrictive,
        "corrective": grounding.pretrain_corrective,
    }[args.kind]
    model, metrics = pretrain(config, Rng(args.seed))
    name = args.name or f"grounder_{args.kind}"
    registry = ModelRegistry(args.models)
    path = registry.save(name, model, model.meta(config))
    write_train_log(Path(args.models) / f"{name}.train_log.jsonl", metrics.loss_log)
    print(json.dumps({
        "model": name,
        "path": str(path),
        "train_template_accuracy": metrics.train_template_accuracy,
        "test_template_accuracy": metrics.test_template_accuracy,
    }, indent=2, sort_keys=True))
    return 0


def _instruction_vocab(dataset: Dataset) -> Vocab:
    return Vocab.from_texts(instruction_texts(dataset))


def cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    registry = ModelRegistry(args.models)
    rng = Rng(args.seed)
    vocab = _instruction_vocab(dataset)
    batch = args.batch if args.batch is not None else 32

    if args.kind == "advgen":
        schedule = advgen_mod.default_advgen_schedule()
        if args.epochs is not None or args.lr is not None or args.batch is not None:
            from dataclasses import replace
            schedule = replace(
                schedule,
                epochs=args.epochs if args.epochs is not None else schedule.epochs,
                lr=args.lr if args.lr is not None else schedule.lr,
                batch_size=batch,
            )
        heads = [Head.SOURCE, Head.TARGET] if args.head == "both" else [Head(args.head)]
        out = {}
        for head in heads:
            model = advgen_mod.AdviceGenerator(vocab, head, rng.child(f"init.{head.value}"))
            log, dev_acc = advgen_mod.train_advgen(
                model, dataset, schedule, rng.child(f"train.{head.value}")
            )
            name = args.name or "advgen"
            name = f"{name}_{head.value}"
            registry.save(name, model, model.meta(schedule, args.seed))
            write_train_log(Path(args.models) / f"{name}.train_log.jsonl", log.entries)
            out[name] = {"dev_top1_accuracy": dev_acc}
        print(json.dumps(out, indent=2, sort_keys=True))
        return 0

    if args.kind == "baseline":
        schedule = predictor_mod.TrainSchedule(
            kind="none",
            epochs=args.epochs if args.epochs is not None else 40,
            batch_size=batch,
            lr=args.lr if args.lr is not None else 1e-3,
        )
        model = predictor_mod.CoordPredictor.baseline(vocab, rng.child("init"))
        log = predictor_mod.train_baseline(model, dataset, schedule, rng.child("train"))
    else:
        grounder_id = args.grounder or f"grounder_{args.kind}"
        if args.kind == "restrictive":
            grounder = registry.load_restrictive_grounder(grounder_id)
            schedule = predictor_mod.TrainSchedule(
                kind="restrictive_half",
                epochs=args.epochs if args.epochs is not None else 40,
                batch_size=batch,
                lr=args.lr if args.lr is not None else 1e-3,
            )
            model = predictor_mod.CoordPredictor.with_advice_branch(
                vocab, grounder, predictor_mod.RESTRICTIVE_ARCH, rng.child("init")
            )
            log = predictor_mod.train_restrictive_e2e(model, dataset, schedule, rng.child("train"))
        else:
            grounder = registry.load_corrective_grounder(grounder_id)
            schedule = predictor_mod.TrainSchedule(
                kind="corrective_two_iter",
                epochs=args.epochs if args.epochs is not None else 25,
                epochs2=args.epochs2 if args.epochs2 is not None else 15,
                batch_size=batch,
                lr=args.lr if args.lr is not None else 1e-3,
            )
            model = predictor_mod.CoordPredictor.with_advice_branch(
                vocab, grounder, predictor_mod.CORRECTIVE_ARCH, rng.child("init")
            )
            log = predictor_mod.train_corrective_e2e(model, dataset, schedule, rng.child("train"))

    name = args.name or args.kind
    path = registry.save(name, model, model.meta(schedule, args.seed))
    write_train_log(Path(args.models) / f"{name}.train_log.jsonl", log.entries)
    final = log.entries[-1]["mean_loss"] if log.entries else None
    print(json.dumps(
        {"model": name, "path": str(path), "final_mean_loss": final},
        indent=2, sort_keys=True,
    ))
    return 0


def _eval_config(args) -> EvalConfig:
    return EvalConfig(
        split=args.split,
        always_advice=args.always_advice,
        train_advice_only=args.train_advice_only,
    )


def cmd_eval(args) -> int:
    dataset = load_dataset(args.data)
    registry = ModelRegistry(args.models)
    protocol = ProtocolKind(args.protocol)
    models = load_protocol_models(registry, protocol)
    report = run_eval(protocol, dataset, models, args.seed, _eval_config(args))
    payload = report_to_json_bytes(report)
    sys.stdout.write(payload.decode("utf-8"))
    if args.out:
        Path(args.out).write_bytes(payload)
    return 0


def cmd_compare(args) -> int:
    dataset = load_dataset(args.data)
    registry = ModelRegistry(args.models)
    bundle = load_bundle(registry)
    report = compare_protocols(dataset, bundle, args.seed, _eval_config(args))
    payload = report_to_json_bytes(report)
    sys.stdout.write(payload.decode("utf-8"))
    print(report.render_table(), file=sys.stderr)
    if args.out:
        Path(args.out).write_bytes(payload)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig(
        models_dir=args.models,
        dataset_path=args.data,
        static_dir=args.static,
        log_path=args.log,
        default_models=dict(DEFAULT_MODEL_IDS),
        seed=args.seed,
    )
    uvicorn.run(create_app(config), host=args.host, port=args.port, log_level="info")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _FAILURES as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
