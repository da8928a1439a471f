"""Experiment configuration: a flat key=value text format.

Lines are `key = value`; blank lines and lines starting with '#' are
skipped. Unknown keys are rejected. The full schema, with defaults, is
documented in the README.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

from harmony.baselines import WeakeningPolicy
from harmony.data import SplitSpec, SyntheticSpec
from harmony.errors import ConfigError, DataError
from harmony.numerics import SgdConfig
from harmony.pipeline import BIAS_MODES, HarmonyConfig

_DATASET_KINDS = ("synthetic", "csv", "idx")


@dataclass
class ExperimentConfig:
    dataset_kind: str
    csv_path: str | None
    csv_label_column: object
    idx_images: str | None
    idx_labels: str | None
    synthetic: SyntheticSpec | None
    synthetic_seed_fixed: bool  # True when the config pinned synthetic.seed
    split: SplitSpec
    hidden_dims: tuple
    activation: str
    sgd: SgdConfig
    detection_delta: float
    coupling_threshold: float
    lambda_c: float
    bias_mode: str
    explicit_weak_classes: tuple | None
    lambda_b: float
    bagging_sizes: tuple
    weakening: WeakeningPolicy
    seed: int
    repeats: int
    output_dir: str

    def echo(self) -> dict:
        """Config as emitted in reports. Excludes output_dir: the output
        location is not part of the experiment identity."""
        out = {
            "dataset.kind": self.dataset_kind,
            "split.train": self.split.train_fraction,
            "split.val": self.split.val_fraction,
            "split.test": self.split.test_fraction,
            "model.hidden_dims": list(self.hidden_dims),
            "model.activation": self.activation,
            "sgd.learning_rate": self.sgd.learning_rate,
            "sgd.momentum": self.sgd.momentum,
            "sgd.batch_size": self.sgd.batch_size,
            "sgd.epochs": self.sgd.epochs,
            "harmony.detection_delta": self.detection_delta,
            "harmony.coupling_threshold": self.coupling_threshold,
            "harmony.lambda_c": self.lambda_c,
            "harmony.bias_mode": self.bias_mode,
            "harmony.explicit_weak_classes": (
                None
                if self.explicit_weak_classes is None
                else [list(g) for g in self.explicit_weak_classes]
            ),
            "baselines.lambda_b": self.lambda_b,
            "baselines.bagging_sizes": list(self.bagging_sizes),
            "baselines.epoch_fraction": self.weakening.epoch_fraction,
            "baselines.bootstrap_fraction": self.weakening.bootstrap_fraction,
            "baselines.hidden_fraction": self.weakening.hidden_fraction,
            "seed": self.seed,
            "repeats": self.repeats,
        }
        if self.dataset_kind == "csv":
            out["dataset.csv_path"] = self.csv_path
            out["dataset.label_column"] = self.csv_label_column
        elif self.dataset_kind == "idx":
            out["dataset.idx_images"] = self.idx_images
            out["dataset.idx_labels"] = self.idx_labels
        else:
            s = self.synthetic
            out.update(
                {
                    "synthetic.num_classes": s.num_classes,
                    "synthetic.n_dims": s.n_dims,
                    "synthetic.samples_per_class": s.samples_per_class,
                    "synthetic.overlap_groups": [list(g) for g in s.overlap_groups],
                    "synthetic.separation": s.separation,
                    "synthetic.overlap_separation": s.overlap_separation,
                    "synthetic.noise_sigma": s.noise_sigma,
                    "synthetic.seed": s.seed if self.synthetic_seed_fixed else None,
                }
            )
        return out


def parse_config_text(text: str, source: str = "<config>") -> dict:
    pairs = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in pairs:
            raise ConfigError(f"{source}:{line_no}: duplicate key {key!r}")
        pairs[key] = value.strip()
    return pairs


class _Reader:
    def __init__(self, pairs: dict, source: str):
        self.pairs = dict(pairs)
        self.source = source

    def take(self, key: str, default=None):
        return self.pairs.pop(key, default)

    def take_typed(self, key: str, cast, default, what: str):
        raw = self.pairs.pop(key, None)
        if raw is None or raw == "":
            return default
        try:
            return cast(raw)
        except (ValueError, TypeError):
            raise ConfigError(f"{self.source}: key {key!r}: expected {what}, got {raw!r}") from None

    def int(self, key, default=None):
        return self.take_typed(key, int, default, "an integer")

    def float(self, key, default=None):
        return self.take_typed(key, float, default, "a number")

    def str(self, key, default=None):
        return self.take_typed(key, str, default, "a string")

    def int_list(self, key, default=()):
        def cast(raw):
            return tuple(int(x) for x in raw.split(",") if x.strip() != "")

        return self.take_typed(key, cast, tuple(default), "a comma-separated integer list")

    def groups(self, key, default=None):
        """'2,3,5' is one group; '2,3|5' separates groups with '|'."""

        def cast(raw):
            return tuple(
                tuple(int(x) for x in part.split(",") if x.strip() != "")
                for part in raw.split("|")
                if part.strip() != ""
            )

        return self.take_typed(key, cast, default, "class groups like '2,3|5'")

    def finish(self):
        if self.pairs:
            raise ConfigError(f"{self.source}: unknown keys: {sorted(self.pairs)}")


def build_experiment_config(
    pairs: dict, source: str = "<config>", base_dir: str = "."
) -> ExperimentConfig:
    r = _Reader(pairs, source)
    kind = r.str("dataset.kind", "synthetic")
    if kind not in _DATASET_KINDS:
        raise ConfigError(f"{source}: dataset.kind must be one of {_DATASET_KINDS}, got {kind!r}")

    seed = r.int("seed", 0)
    repeats = r.int("repeats", 1)
    if repeats < 1:
        raise ConfigError(f"{source}: repeats must be >= 1")

    csv_path = idx_images = idx_labels = None
    label_column: object = None
    synthetic = None
    synthetic_seed_fixed = False
    if kind == "csv":
        csv_path = _resolve(r.str("dataset.csv_path"), base_dir, source, "dataset.csv_path")
        raw_label = r.str("dataset.label_column", "label")
        label_column = int(raw_label) if raw_label.lstrip("-").isdigit() else raw_label
    elif kind == "idx":
        idx_images = _resolve(r.str("dataset.idx_images"), base_dir, source, "dataset.idx_images")
        idx_labels = _resolve(r.str("dataset.idx_labels"), base_dir, source, "dataset.idx_labels")
    else:
        synth_seed = r.int("synthetic.seed", None)
        synthetic_seed_fixed = synth_seed is not None
        try:
            synthetic = SyntheticSpec(
                num_classes=r.int("synthetic.num_classes", 10),
                n_dims=r.int("synthetic.n_dims", 16),
                samples_per_class=r.int("synthetic.samples_per_class", 500),
                overlap_groups=r.groups("synthetic.overlap_groups", ()) or (),
                separation=r.float("synthetic.separation", 6.0),
                overlap_separation=r.float("synthetic.overlap_separation", 1.0),
                noise_sigma=r.float("synthetic.noise_sigma", 1.0),
                seed=synth_seed if synthetic_seed_fixed else 0,
            )
        except DataError as exc:
            raise ConfigError(f"{source}: invalid synthetic spec: {exc}") from exc

    try:
        split = SplitSpec(
            train_fraction=r.float("split.train", 0.8),
            val_fraction=r.float("split.val", 0.1),
            test_fraction=r.float("split.test", 0.1),
            seed=0,  # filled per run
        )
        sgd = SgdConfig(
            learning_rate=r.float("sgd.learning_rate", 0.1),
            momentum=r.float("sgd.momentum", 0.9),
            batch_size=r.int("sgd.batch_size", 32),
            epochs=r.int("sgd.epochs", 30),
            shuffle_seed=0,  # filled per row
        )
        weakening = WeakeningPolicy(
            epoch_fraction=r.float("baselines.epoch_fraction", 0.5),
            bootstrap_fraction=r.float("baselines.bootstrap_fraction", 0.8),
            hidden_fraction=r.float("baselines.hidden_fraction", 1.0),
        )
    except (DataError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    activation = r.str("model.activation", "relu")
    hidden_dims = r.int_list("model.hidden_dims", (64,))
    detection_delta = r.float("harmony.detection_delta", 0.04)
    coupling_threshold = r.float("harmony.coupling_threshold", 0.05)
    lambda_c = r.float("harmony.lambda_c", 4.0)
    bias_mode = r.str("harmony.bias_mode", "weights")
    explicit = r.groups("harmony.explicit_weak_classes", None)
    lambda_b = r.float("baselines.lambda_b", 2.0)
    bagging_sizes = r.int_list("baselines.bagging_sizes", (2, 5))
    output_dir = r.str("output_dir", "out")
    r.finish()

    if bias_mode not in BIAS_MODES:
        raise ConfigError(f"{source}: harmony.bias_mode must be one of {BIAS_MODES}")
    if lambda_c <= 1 or lambda_b <= 1:
        raise ConfigError(f"{source}: lambda_c and lambda_b must be > 1")
    if not lambda_b < lambda_c:
        raise ConfigError(
            f"{source}: baselines.lambda_b ({lambda_b}) must be < harmony.lambda_c ({lambda_c}); "
            "the complementary models must be biased harder than the weighted baseline"
        )
    if any(n < 2 for n in bagging_sizes):
        raise ConfigError(f"{source}: bagging sizes must be >= 2, got {bagging_sizes}")
    if detection_delta < 0 or coupling_threshold < 0:
        raise ConfigError(f"{source}: delta and coupling_threshold must be >= 0")

    return ExperimentConfig(
        dataset_kind=kind,
        csv_path=csv_path,
        csv_label_column=label_column,
        idx_images=idx_images,
        idx_labels=idx_labels,
        synthetic=synthetic,
        synthetic_seed_fixed=synthetic_seed_fixed,
        split=split,
        hidden_dims=hidden_dims,
        activation=activation,
        sgd=sgd,
        detection_delta=detection_delta,
        coupling_threshold=coupling_threshold,
        lambda_c=lambda_c,
        bias_mode=bias_mode,
        explicit_weak_classes=explicit,
        lambda_b=lambda_b,
        bagging_sizes=bagging_sizes,
        weakening=weakening,
        seed=seed,
        repeats=repeats,
        output_dir=output_dir,
    )


def _resolve(path, base_dir: str, source: str, key: str) -> str:
    if not path:
        raise ConfigError(f"{source}: key {key!r} is required for this dataset kind")
    resolved = path if os.path.isabs(path) else os.path.join(base_dir, path)
    if not os.path.exists(resolved):
        raise ConfigError(f"{source}: {key} file not found: {resolved}")
    return resolved


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    pairs = parse_config_text(text, str(path))
    return build_experiment_config(pairs, str(path), base_dir=os.path.dirname(str(path)) or ".")
