"""Experiment orchestration and report emission.

One run trains and evaluates, on a shared split, the eight canonical
methods: (a) target, (b) weighted target, (c) each complementary model
standalone, (d) the conductor with group accuracies, (e) the routed
ensemble, (f) bagging n=2, (g) bagging n=5, (h) a two-target averaging
pair. Every row carries its per-class accuracy vector, mean, population
variance, group accuracies, and forward-pass cost.

Reports are deterministic byte-for-byte given (config, seed); wall-clock
timings therefore go to a separate timings.json sidecar.
"""
from __future__ import annotations

import dataclasses
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from harmony import __version__, analysis, baselines, classifier, kernels, pipeline
from harmony.analysis import WeakGroupPartition
from harmony.classifier import ClassifierSpec, TrainConfig
from harmony.config import ExperimentConfig
from harmony.data import Dataset, generate_synthetic, load_csv, load_idx, stratified_split
from harmony.errors import HarmonyError, TrainingError
from harmony.pipeline import PassCounter
from harmony.rng import Prng, derive_seed

SCHEMA_VERSION = 1


@dataclass
class MethodRow:
    row_id: str
    method: str
    per_class_accuracy: list
    mean: float
    variance: float
    strong_accuracy: float
    weak_group_accuracies: list
    forward_passes_per_sample: int
    seeds: dict
    train_seconds: float = 0.0
    infer_seconds: float = 0.0

    def to_obj(self) -> dict:
        return {
            "id": self.row_id,
            "method": self.method,
            "per_class_accuracy": [_round6(a) for a in self.per_class_accuracy],
            "mean": _round6(self.mean),
            "variance": _round6(self.variance),
            "strong_accuracy": _round6(self.strong_accuracy),
            "weak_group_accuracies": [_round6(a) for a in self.weak_group_accuracies],
            "forward_passes_per_sample": self.forward_passes_per_sample,
            "seeds": self.seeds,
        }


@dataclass
class RunResult:
    run_index: int
    seed: int
    partition: WeakGroupPartition
    rows: list

    def to_obj(self) -> dict:
        return {
            "run": self.run_index,
            "seed": self.seed,
            "partition": {
                "strong": list(self.partition.strong),
                "groups": [list(g) for g in self.partition.groups],
            },
            "rows": [row.to_obj() for row in self.rows],
        }


@dataclass
class ReportDocument:
    config: ExperimentConfig
    runs: list = field(default_factory=list)
    mean_rows: list = field(default_factory=list)

    def to_obj(self) -> dict:
        obj = {
            "schema_version": SCHEMA_VERSION,
            "format": "harmony-report",
            "environment": environment_block(),
            "config": self.config.echo(),
            "runs": [run.to_obj() for run in self.runs],
        }
        if len(self.runs) > 1:
            obj["mean_rows"] = [row.to_obj() for row in self.mean_rows]
        return obj

    def timings_obj(self) -> dict:
        return {
            "runs": [
                {
                    "run": run.run_index,
                    "rows": {
                        row.row_id: {
                            "train_seconds": row.train_seconds,
                            "infer_seconds": row.infer_seconds,
                        }
                        for row in run.rows
                    },
                }
                for run in self.runs
            ]
        }


def environment_block() -> dict:
    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "package_version": __version__,
        "prng_algorithm": Prng.ALGORITHM,
        "kernel_backend": kernels.BACKEND,
    }


def _round6(x: float) -> float:
    """Fixed 6-significant-digit formatting for emitted floats."""
    return float(f"{float(x):.6g}")


def build_dataset(config: ExperimentConfig, run_seed: int) -> Dataset:
    if config.dataset_kind == "csv":
        return load_csv(config.csv_path, config.csv_label_column)
    if config.dataset_kind == "idx":
        return load_idx(config.idx_images, config.idx_labels)
    spec = config.synthetic
    if not config.synthetic_seed_fixed:
        spec = dataclasses.replace(spec, seed=derive_seed(run_seed, "dataset"))
    return generate_synthetic(spec)


def _train_config(config: ExperimentConfig, run_seed: int, label: str) -> TrainConfig:
    return TrainConfig(
        sgd=dataclasses.replace(
            config.sgd, shuffle_seed=derive_seed(run_seed, f"{label}/shuffle")
        ),
        seed=derive_seed(run_seed, f"{label}/init"),
    )


def _evaluated_row(
    row_id: str,
    method: str,
    predictions: np.ndarray,
    test: Dataset,
    partition: WeakGroupPartition,
    fwd_passes: int,
    seeds: dict,
) -> MethodRow:
    cm = analysis.confusion_matrix(predictions, test.labels, test.num_classes)
    report = analysis.per_class_report(cm)
    return _report_row(row_id, method, report, partition, fwd_passes, seeds)


def _report_row(row_id, method, report, partition, fwd_passes, seeds) -> MethodRow:
    group_acc = analysis.group_accuracy(report, partition)
    return MethodRow(
        row_id=row_id,
        method=method,
        per_class_accuracy=[float(a) for a in report.per_class_accuracy],
        mean=report.mean,
        variance=report.variance,
        strong_accuracy=group_acc.strong,
        weak_group_accuracies=list(group_acc.groups),
        forward_passes_per_sample=fwd_passes,
        seeds=seeds,
    )


def _timed(row: MethodRow, attr: str, fn, *args, **kwargs):
    start = time.perf_counter()
    result = fn(*args, **kwargs)
    setattr(row, attr, time.perf_counter() - start)
    return result


def run_single(config: ExperimentConfig, run_seed: int, run_index: int = 1) -> RunResult:
    """Train and evaluate all method rows for one seed."""
    ds = build_dataset(config, run_seed)
    split_spec = dataclasses.replace(config.split, seed=derive_seed(run_seed, "split"))
    train_ds, val_ds, test_ds = stratified_split(ds, split_spec)
    spec = ClassifierSpec(
        input_dim=ds.n_dims,
        hidden_dims=config.hidden_dims,
        output_classes=ds.num_classes,
        activation=config.activation,
    )
    rows: list = []
    result = RunResult(run_index, run_seed, None, rows)

    def stage(row_id: str, fn):
        try:
            return fn()
        except HarmonyError as exc:
            raise TrainingError(f"stage {row_id!r} failed: {exc}") from exc

    # (a) target
    cfg_a = _train_config(config, run_seed, "target")
    t0 = time.perf_counter()
    target = stage("a", lambda: classifier.train(train_ds, spec, cfg_a))
    t_train = time.perf_counter() - t0
    t0 = time.perf_counter()
    preds = classifier.predict(target, test_ds.features)
    t_infer = time.perf_counter() - t0

    # (e) pipeline (also yields rows c and d); reuses the row-(a) target
    harmony_cfg = pipeline.HarmonyConfig(
        detection_delta=config.detection_delta,
        coupling_threshold=config.coupling_threshold,
        complementary_weight=config.lambda_c,
        explicit_weak_classes=config.explicit_weak_classes,
        bias_mode=config.bias_mode,
        train=_train_config(config, run_seed, "harmony"),
    )
    t0 = time.perf_counter()
    model = stage("e", lambda: pipeline.train_harmony(train_ds, val_ds, spec, harmony_cfg, target=target))
    harmony_train_seconds = time.perf_counter() - t0
    partition = model.partition
    result.partition = partition

    row_a = _evaluated_row(
        "a", "target", preds, test_ds, partition, 1, {"init": cfg_a.seed, "shuffle": cfg_a.sgd.shuffle_seed}
    )
    row_a.train_seconds, row_a.infer_seconds = t_train, t_infer
    rows.append(row_a)

    weak_union = partition.weak_classes()

    # (b) weighted target: same architecture, loss weights raised on the weak set
    if weak_union:
        cfg_b = _train_config(config, run_seed, "target_weighted")
        row_b = MethodRow("b", "target_weighted", [], 0, 0, 0, [], 1,
                          {"init": cfg_b.seed, "shuffle": cfg_b.sgd.shuffle_seed})
        weighted = stage(
            "b",
            lambda: _timed(
                row_b, "train_seconds", baselines.train_weighted_target,
                train_ds, spec, cfg_b, config.lambda_b, weak_union,
            ),
        )
        preds_b = _timed(row_b, "infer_seconds", classifier.predict, weighted, test_ds.features)
        _fill_row(row_b, preds_b, test_ds, partition)
        rows.append(row_b)

    # (c) complementary models standalone
    for i, comp in enumerate(model.complementaries, start=1):
        row_id = "c" if i == 1 else f"c{i}"
        row_c = MethodRow(
            row_id, f"complementary_{i}", [], 0, 0, 0, [], 1,
            {"init": derive_seed(harmony_cfg.train.seed, f"complementary/{i}/init")},
        )
        preds_c = _timed(row_c, "infer_seconds", classifier.predict, comp, test_ds.features)
        _fill_row(row_c, preds_c, test_ds, partition)
        rows.append(row_c)

    # (d) conductor standalone: per original class, the rate of correct routing
    if not model.is_degenerate:
        timer = MethodRow("d", "conductor", [], 0, 0, 0, [], 1, {})
        routed = _timed(timer, "infer_seconds", pipeline.route, model, test_ds.features)
        true_groups = pipeline.build_conductor_labels(test_ds.labels, partition)
        acc = np.empty(test_ds.num_classes)
        support = np.empty(test_ds.num_classes, dtype=np.int64)
        for c in range(test_ds.num_classes):
            mask = test_ds.labels == c
            support[c] = mask.sum()
            acc[c] = float((routed[mask] == true_groups[mask]).mean()) if support[c] else 0.0
        report_d = analysis.PerClassReport.from_accuracies(acc, support)
        row_d = _report_row(
            "d", "conductor", report_d, partition, 1,
            {"init": derive_seed(harmony_cfg.train.seed, "conductor/init")},
        )
        row_d.infer_seconds = timer.infer_seconds
        rows.append(row_d)

    # (e) routed ensemble
    row_e = MethodRow("e", "harmony", [], 0, 0, 0, [],
                      pipeline.inference_cost(model).forward_passes_per_sample,
                      {"train": harmony_cfg.train.seed})
    row_e.train_seconds = harmony_train_seconds
    preds_e = _timed(row_e, "infer_seconds", pipeline.predict, model, test_ds.features)
    _fill_row(row_e, preds_e, test_ds, partition)
    rows.append(row_e)

    # (f)(g) bagging
    for n in config.bagging_sizes:
        row_id = {2: "f", 5: "g"}.get(n, f"bagging{n}")
        seed_n = derive_seed(run_seed, f"bagging/{n}")
        row_fg = MethodRow(row_id, f"bagging_n{n}", [], 0, 0, 0, [], n, {"bagging": seed_n})
        ensemble = stage(
            row_id,
            lambda: _timed(
                row_fg, "train_seconds", baselines.train_bagging,
                train_ds, spec, _train_config(config, run_seed, f"bagging/{n}"),
                n, config.weakening, seed_n,
            ),
        )
        preds_fg = _timed(row_fg, "infer_seconds", baselines.predict_majority, ensemble, test_ds.features)
        _fill_row(row_fg, preds_fg, test_ds, partition)
        rows.append(row_fg)

    # (h) two-target averaging
    cfg_h = _train_config(config, run_seed, "target2")
    row_h = MethodRow("h", "target_pair_average", [], 0, 0, 0, [], 2,
                      {"init": cfg_h.seed, "shuffle": cfg_h.sgd.shuffle_seed})
    target2 = stage("h", lambda: _timed(row_h, "train_seconds", classifier.train, train_ds, spec, cfg_h))
    pair = baselines.AveragingEnsemble((target, target2))
    preds_h = _timed(row_h, "infer_seconds", baselines.predict_average, pair, test_ds.features)
    _fill_row(row_h, preds_h, test_ds, partition)
    rows.append(row_h)

    return result


def _fill_row(row: MethodRow, predictions, test: Dataset, partition) -> None:
    cm = analysis.confusion_matrix(predictions, test.labels, test.num_classes)
    report = analysis.per_class_report(cm)
    group_acc = analysis.group_accuracy(report, partition)
    row.per_class_accuracy = [float(a) for a in report.per_class_accuracy]
    row.mean = report.mean
    row.variance = report.variance
    row.strong_accuracy = group_acc.strong
    row.weak_group_accuracies = list(group_acc.groups)


def run_experiment(config: ExperimentConfig) -> ReportDocument:
    """All repeats; on failure a partial report is written before re-raising."""
    report = ReportDocument(config)
    try:
        for i in range(1, config.repeats + 1):
            run_seed = config.seed if i == 1 else derive_seed(config.seed, f"repeat/{i}")
            report.runs.append(run_single(config, run_seed, i))
    except HarmonyError:
        _write_partial(report)
        raise
    if config.repeats > 1:
        report.mean_rows = _mean_rows(report.runs)
    return report


def _mean_rows(runs: list) -> list:
    """Across-run mean accuracy vectors; mean/variance recomputed from them."""
    by_id: dict = {}
    for run in runs:
        for row in run.rows:
            by_id.setdefault(row.row_id, []).append(row)
    out = []
    for row_id, group in by_id.items():
        if len(group) != len(runs):
            continue  # a row must appear in every run to be averaged
        acc = np.mean([r.per_class_accuracy for r in group], axis=0)
        mean = float(acc.mean())
        out.append(
            MethodRow(
                row_id=row_id,
                method=group[0].method,
                per_class_accuracy=[float(a) for a in acc],
                mean=mean,
                variance=float(np.mean((acc - mean) ** 2)),
                strong_accuracy=float(np.mean([r.strong_accuracy for r in group])),
                weak_group_accuracies=[
                    float(x) for x in np.mean([r.weak_group_accuracies for r in group], axis=0)
                ]
                if group[0].weak_group_accuracies
                else [],
                forward_passes_per_sample=group[0].forward_passes_per_sample,
                seeds={},
            )
        )
    return out


def _write_partial(report: ReportDocument) -> None:
    try:
        os.makedirs(report.config.output_dir, exist_ok=True)
        _atomic_write(
            os.path.join(report.config.output_dir, "report.partial.json"),
            (json.dumps(report.to_obj(), indent=2) + "\n").encode("utf-8"),
        )
    except OSError:
        pass  # the original failure matters more than the partial dump


def _atomic_write(path: str, data: bytes) -> None:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_report(report: ReportDocument, formats=("json", "csv"), out_dir: str | None = None) -> list:
    """Write report.json / report.csv (+ timings.json sidecar); returns paths."""
    out_dir = out_dir or report.config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    unknown = set(formats) - {"json", "csv"}
    if unknown:
        raise ValueError(f"unknown report formats: {sorted(unknown)}")
    written = []
    if "json" in formats:
        path = os.path.join(out_dir, "report.json")
        _atomic_write(path, (json.dumps(report.to_obj(), indent=2) + "\n").encode("utf-8"))
        written.append(path)
    if "csv" in formats:
        single = len(report.runs) == 1
        for run in report.runs:
            name = "report.csv" if single else f"report_run{run.run_index}.csv"
            path = os.path.join(out_dir, name)
            _atomic_write(path, _csv_bytes(run.rows))
            written.append(path)
        if not single and report.mean_rows:
            path = os.path.join(out_dir, "report_mean.csv")
            _atomic_write(path, _csv_bytes(report.mean_rows))
            written.append(path)
    timings = os.path.join(out_dir, "timings.json")
    _atomic_write(timings, (json.dumps(report.timings_obj(), indent=2) + "\n").encode("utf-8"))
    written.append(timings)
    return written


def _csv_bytes(rows: list) -> bytes:
    if not rows:
        return b""
    k = len(rows[0].per_class_accuracy)
    n_groups = max(len(r.weak_group_accuracies) for r in rows)
    header = (
        ["method"]
        + [f"class_{i}" for i in range(k)]
        + ["avg", "var", "strong_acc"]
        + [f"weak_acc_{g}" for g in range(1, n_groups + 1)]
        + ["fwd_passes"]
    )
    lines = [",".join(header)]
    for row in rows:
        cells = [f"{row.row_id}_{row.method}"]
        cells += [f"{a:.6g}" for a in row.per_class_accuracy]
        cells += [f"{row.mean:.6g}", f"{row.variance:.6g}", f"{row.strong_accuracy:.6g}"]
        weak = list(row.weak_group_accuracies) + [float("nan")] * (n_groups - len(row.weak_group_accuracies))
        cells += [f"{a:.6g}" for a in weak]
        cells.append(str(row.forward_passes_per_sample))
        lines.append(",".join(cells))
    return ("\n".join(lines) + "\n").encode("utf-8")
