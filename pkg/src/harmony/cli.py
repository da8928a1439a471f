"""Command-line interface.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 training
error. All subcommands are deterministic given --config and --seed.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from harmony import analysis, baselines, classifier, pipeline
from harmony.config import ExperimentConfig, load_config
from harmony.data import dump_csv, generate_synthetic, stratified_split
from harmony.errors import ConfigError, DataError, HarmonyError, TrainingError
from harmony.harness import build_dataset, emit_report, environment_block, run_experiment
from harmony.rng import derive_seed
from harmony.serialize import peek_format


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="harmony", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(p, needs_out=False):
        p.add_argument("--config", required=True, help="experiment config file (key = value)")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", default=None, help="output directory" if not needs_out else "output path")

    p_run = sub.add_parser("run", help="train and evaluate every method row")
    common(p_run)
    p_run.add_argument("--repeats", type=int, default=None, help="override repeats")
    p_run.add_argument(
        "--formats", default="json,csv", help="comma list from {json,csv} (default both)"
    )

    p_tt = sub.add_parser("train-target", help="train the plain target model and save it")
    common(p_tt)

    p_an = sub.add_parser("analyze", help="confusion + weak-class detection for a saved model")
    common(p_an)
    p_an.add_argument("--model", required=True, help="saved classifier file")

    p_th = sub.add_parser("train-harmony", help="train the full routed ensemble and save it")
    common(p_th)

    p_ev = sub.add_parser("evaluate", help="evaluate a saved model on the test split")
    common(p_ev)
    p_ev.add_argument("--model", required=True, help="saved model or ensemble container")

    p_sy = sub.add_parser("synth", help="write the synthetic dataset to CSV")
    common(p_sy, needs_out=True)
    return parser


def _load(args) -> ExperimentConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if getattr(args, "repeats", None):
        config.repeats = args.repeats
    if args.out:
        config.output_dir = args.out
    return config


def _splits(config: ExperimentConfig):
    ds = build_dataset(config, config.seed)
    split_spec = dataclasses.replace(config.split, seed=derive_seed(config.seed, "split"))
    return ds, stratified_split(ds, split_spec)


def _classifier_spec(config: ExperimentConfig, ds):
    return classifier.ClassifierSpec(
        input_dim=ds.n_dims,
        hidden_dims=config.hidden_dims,
        output_classes=ds.num_classes,
        activation=config.activation,
    )


def _cmd_run(args) -> int:
    config = _load(args)
    formats = tuple(f.strip() for f in args.formats.split(",") if f.strip())
    unknown = set(formats) - {"json", "csv"}
    if unknown:
        raise ConfigError(f"unknown --formats entries: {sorted(unknown)}")
    report = run_experiment(config)
    written = emit_report(report, formats)
    for run in report.runs:
        print(f"run {run.run_index} (seed {run.seed}):")
        for row in run.rows:
            weak = ", ".join(f"{a:.4f}" for a in row.weak_group_accuracies)
            print(
                f"  ({row.row_id}) {row.method:<22} avg {row.mean:.4f}  var {row.variance:.6f}"
                f"  strong {row.strong_accuracy:.4f}  weak [{weak}]"
                f"  passes {row.forward_passes_per_sample}"
            )
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_train_target(args) -> int:
    config = _load(args)
    ds, (train_ds, _val, _test) = _splits(config)
    spec = _classifier_spec(config, ds)
    cfg = _target_train_config(config)
    model = classifier.train(train_ds, spec, cfg)
    os.makedirs(config.output_dir, exist_ok=True)
    path = os.path.join(config.output_dir, "target.clf")
    classifier.save(model, path)
    print(f"final train loss {model.metadata['final_train_loss']:.6f}")
    print(f"wrote {path}")
    return 0


def _target_train_config(config: ExperimentConfig) -> classifier.TrainConfig:
    return classifier.TrainConfig(
        sgd=dataclasses.replace(
            config.sgd, shuffle_seed=derive_seed(config.seed, "target/shuffle")
        ),
        seed=derive_seed(config.seed, "target/init"),
    )


def _cmd_analyze(args) -> int:
    config = _load(args)
    model = classifier.load(args.model)
    _ds, (_train, val_ds, _test) = _splits(config)
    preds = classifier.predict(model, val_ds.features)
    cm = analysis.confusion_matrix(preds, val_ds.labels, val_ds.num_classes)
    report = analysis.per_class_report(cm)
    weak = analysis.detect_weak_classes(report, config.detection_delta)
    print("validation confusion matrix (rows = true class):")
    for row in cm.counts:
        print("  " + " ".join(f"{v:5d}" for v in row))
    print("per-class accuracy: [" + ", ".join(f"{a:.4f}" for a in report.per_class_accuracy) + "]")
    print(f"mean {report.mean:.4f}  variance {report.variance:.6f}")
    print(f"weak classes: {list(weak)}")
    if weak:
        partition = analysis.group_weak_classes(cm, weak, config.coupling_threshold)
        print(f"weak groups: {[list(g) for g in partition.groups]}")
    return 0


def _cmd_train_harmony(args) -> int:
    config = _load(args)
    ds, (train_ds, val_ds, _test) = _splits(config)
    spec = _classifier_spec(config, ds)
    harmony_cfg = pipeline.HarmonyConfig(
        detection_delta=config.detection_delta,
        coupling_threshold=config.coupling_threshold,
        complementary_weight=config.lambda_c,
        explicit_weak_classes=config.explicit_weak_classes,
        bias_mode=config.bias_mode,
        train=classifier.TrainConfig(
            sgd=dataclasses.replace(
                config.sgd, shuffle_seed=derive_seed(config.seed, "harmony/shuffle")
            ),
            seed=derive_seed(config.seed, "harmony/init"),
        ),
    )
    model = pipeline.train_harmony(train_ds, val_ds, spec, harmony_cfg)
    os.makedirs(config.output_dir, exist_ok=True)
    path = os.path.join(config.output_dir, "harmony.ens")
    pipeline.save(model, path)
    print(f"weak groups: {[list(g) for g in model.partition.groups]}")
    print(f"forward passes per sample: {pipeline.inference_cost(model).forward_passes_per_sample}")
    print(f"wrote {path}")
    return 0


def _cmd_evaluate(args) -> int:
    config = _load(args)
    _ds, (_train, _val, test_ds) = _splits(config)
    fmt = peek_format(args.model)
    if fmt == "harmony-ensemble":
        model = pipeline.load(args.model)
        preds = pipeline.predict(model, test_ds.features)
        passes = pipeline.inference_cost(model).forward_passes_per_sample
    elif fmt == "harmony-bagging":
        ensemble = baselines.load_bagging(args.model)
        preds = baselines.predict_majority(ensemble, test_ds.features)
        passes = len(ensemble.members)
    elif fmt == "harmony-averaging":
        ensemble = baselines.load_averaging(args.model)
        preds = baselines.predict_average(ensemble, test_ds.features)
        passes = 2
    else:
        model = classifier.load(args.model)
        preds = classifier.predict(model, test_ds.features)
        passes = 1
    cm = analysis.confusion_matrix(preds, test_ds.labels, test_ds.num_classes)
    report = analysis.per_class_report(cm)
    out = {
        "model": os.path.basename(str(args.model)),
        "per_class_accuracy": [round(float(a), 6) for a in report.per_class_accuracy],
        "mean": round(report.mean, 6),
        "variance": round(report.variance, 8),
        "forward_passes_per_sample": passes,
        "environment": environment_block(),
    }
    print(json.dumps(out, indent=2))
    return 0


def _cmd_synth(args) -> int:
    config = _load(args)
    if config.dataset_kind != "synthetic":
        raise ConfigError("synth requires dataset.kind = synthetic")
    ds = build_dataset(config, config.seed)
    out = args.out or os.path.join(config.output_dir, "synthetic.csv")
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    dump_csv(ds, out)
    print(f"wrote {out} ({ds.n_samples} rows, {ds.n_dims} features, {ds.num_classes} classes)")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "train-target": _cmd_train_target,
    "analyze": _cmd_analyze,
    "train-harmony": _cmd_train_harmony,
    "evaluate": _cmd_evaluate,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_usage(sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return 3
    except HarmonyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
