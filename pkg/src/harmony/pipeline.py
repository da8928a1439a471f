"""The routed ensemble: target + biased complementary models + conductor.

A conductor sends each sample either to the target model (general classes)
or to the complementary model covering its weak group, so inference costs
two forward passes per sample no matter how many complementary models
exist. With no weak classes detected the ensemble degenerates to the
target alone.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from harmony import analysis, classifier
from harmony.analysis import WeakGroupPartition
from harmony.classifier import ClassifierSpec, TrainConfig, TrainedClassifier
from harmony.data import Dataset
from harmony.errors import DataError, HarmonyError, TrainingError, WeakDetectionError
from harmony.rng import derive_seed
from harmony.serialize import read_container, write_container

BIAS_MODES = ("weights", "oversample")

_CONTAINER_FORMAT = "harmony-ensemble"
_CONTAINER_VERSION = 1


@dataclass(frozen=True)
class HarmonyConfig:
    detection_delta: float = 0.04
    coupling_threshold: float = 0.05
    complementary_weight: float = 4.0  # loss weight on a complementary model's own group
    explicit_weak_classes: tuple | None = None  # flat list = one group; nested = groups
    bias_mode: str = "weights"
    train: TrainConfig = TrainConfig()

    def __post_init__(self):
        if self.complementary_weight <= 1:
            raise ValueError(
                f"complementary_weight must be > 1, got {self.complementary_weight}"
            )
        if self.detection_delta < 0:
            raise ValueError("detection_delta must be >= 0")
        if self.coupling_threshold < 0:
            raise ValueError("coupling_threshold must be >= 0")
        if self.bias_mode not in BIAS_MODES:
            raise ValueError(f"bias_mode must be one of {BIAS_MODES}")
        if self.explicit_weak_classes is not None:
            raw = list(self.explicit_weak_classes)
            if raw and all(isinstance(x, (list, tuple)) for x in raw):
                groups = tuple(tuple(int(c) for c in g) for g in raw)
            else:
                groups = (tuple(int(c) for c in raw),) if raw else ()
            object.__setattr__(self, "explicit_weak_classes", groups)


@dataclass(frozen=True)
class HarmonyModel:
    target: TrainedClassifier
    complementaries: tuple  # one K-way TrainedClassifier per weak group
    conductor: TrainedClassifier | None  # (1 + len(groups))-way router; None if degenerate
    partition: WeakGroupPartition
    config: dict  # snapshot of the HarmonyConfig used

    def __post_init__(self):
        object.__setattr__(self, "complementaries", tuple(self.complementaries))
        if len(self.complementaries) != len(self.partition.groups):
            raise ValueError("one complementary model per weak group required")
        if self.complementaries:
            if self.conductor is None:
                raise ValueError("non-degenerate model requires a conductor")
            if self.conductor.spec.output_classes != 1 + len(self.complementaries):
                raise ValueError("conductor output size must be 1 + number of groups")
        elif self.conductor is not None:
            raise ValueError("degenerate model must not carry a conductor")
        for sub in (*self.complementaries, self.target):
            if sub.spec.input_dim != self.target.spec.input_dim:
                raise ValueError("all sub-models must share input_dim")
            if sub.spec.hidden_dims != self.target.spec.hidden_dims:
                raise ValueError("all sub-models must share the hidden architecture")

    @property
    def is_degenerate(self) -> bool:
        return not self.complementaries


@dataclass(frozen=True)
class CostModel:
    forward_passes_per_sample: int
    per_model: dict


class PassCounter:
    """Counts forward passes (samples pushed through a sub-model)."""

    def __init__(self):
        self.counts = {}

    def add(self, name: str, n: int) -> None:
        self.counts[name] = self.counts.get(name, 0) + int(n)

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def build_conductor_labels(labels, partition: WeakGroupPartition) -> np.ndarray:
    """Remap class labels to routing labels: strong -> 0, group g -> g."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= partition.num_classes):
        raise ValueError("labels out of range for partition")
    return partition.group_labels()[labels]


def build_complementary_weights(
    partition: WeakGroupPartition, group_index: int, lambda_c: float, num_classes: int
) -> np.ndarray:
    """Loss-weight vector: lambda_c on the group's classes, 1 elsewhere."""
    if not 0 <= group_index < len(partition.groups):
        raise ValueError(f"group_index {group_index} out of range")
    if lambda_c <= 1:
        raise ValueError(f"lambda_c must be > 1, got {lambda_c}")
    weights = np.ones(num_classes)
    weights[list(partition.groups[group_index])] = lambda_c
    return weights


def _oversampled(train: Dataset, group, copies: int) -> Dataset:
    """Training set with each sample of the group duplicated to `copies` total."""
    mask = np.isin(train.labels, list(group))
    extra_idx = np.nonzero(mask)[0]
    blocks_x = [train.features] + [train.features[extra_idx]] * (copies - 1)
    blocks_y = [train.labels] + [train.labels[extra_idx]] * (copies - 1)
    return Dataset(np.concatenate(blocks_x), np.concatenate(blocks_y), train.num_classes)


def _sub_config(config: TrainConfig, label: str) -> TrainConfig:
    """Distinct init/shuffle seeds per sub-model, derived from the shared seed."""
    sgd = dataclasses.replace(config.sgd, shuffle_seed=derive_seed(config.seed, f"{label}/shuffle"))
    return dataclasses.replace(config, sgd=sgd, seed=derive_seed(config.seed, f"{label}/init"))


def train_harmony(
    train: Dataset,
    val: Dataset,
    spec: ClassifierSpec,
    config: HarmonyConfig,
    target: TrainedClassifier | None = None,
) -> HarmonyModel:
    """Full pipeline: target, weak-class analysis, complementaries, conductor.

    A pre-trained target may be passed in to reuse it; otherwise one is
    trained here. Detection runs on the validation split; an explicit
    weak-class list in the config replaces detection entirely. Zero weak
    classes yield a degenerate pass-through model (not an error); weak
    classes covering every class raise.
    """
    if val.n_samples == 0:
        raise DataError("validation dataset is empty")
    k = train.num_classes

    if target is None:
        target = _stage("target", classifier.train, train, spec, _sub_config(config.train, "target"))

    val_pred = classifier.predict(target, val.features)
    cm = analysis.confusion_matrix(val_pred, val.labels, k)
    if config.explicit_weak_classes is not None:
        groups = config.explicit_weak_classes
        weak = sorted(c for g in groups for c in g)
        strong = tuple(c for c in range(k) if c not in set(weak))
        try:
            partition = WeakGroupPartition(strong, groups, k)
        except WeakDetectionError as exc:
            raise TrainingError(f"stage 'detect': {exc}") from exc
    else:
        report = analysis.per_class_report(cm)
        try:
            weak = analysis.detect_weak_classes(report, config.detection_delta)
            partition = analysis.group_weak_classes(cm, weak, config.coupling_threshold)
        except WeakDetectionError as exc:
            raise TrainingError(f"stage 'detect': {exc}") from exc

    snapshot = _config_snapshot(config)
    if not partition.groups:
        return HarmonyModel(target, (), None, partition, snapshot)

    complementaries = []
    for g, group in enumerate(partition.groups):
        sub_cfg = _sub_config(config.train, f"complementary/{g + 1}")
        if config.bias_mode == "weights":
            weights = build_complementary_weights(partition, g, config.complementary_weight, k)
            sub_cfg = dataclasses.replace(sub_cfg, class_weights=tuple(weights))
            comp_train = train
        else:
            copies = int(np.ceil(config.complementary_weight))
            comp_train = _oversampled(train, group, copies)
        complementaries.append(
            _stage(f"complementary/{g + 1}", classifier.train, comp_train, spec, sub_cfg)
        )

    conductor_labels = build_conductor_labels(train.labels, partition)
    conductor_train = Dataset(train.features, conductor_labels, 1 + len(partition.groups))
    conductor_spec = classifier.respec_output(spec, 1 + len(partition.groups))
    conductor = _stage(
        "conductor",
        classifier.train,
        conductor_train,
        conductor_spec,
        _sub_config(config.train, "conductor"),
    )
    return HarmonyModel(target, tuple(complementaries), conductor, partition, snapshot)


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except HarmonyError as exc:
        raise TrainingError(f"stage {name!r}: {exc}") from exc


def _config_snapshot(config: HarmonyConfig) -> dict:
    return {
        "detection_delta": config.detection_delta,
        "coupling_threshold": config.coupling_threshold,
        "complementary_weight": config.complementary_weight,
        "explicit_weak_classes": (
            None
            if config.explicit_weak_classes is None
            else [list(g) for g in config.explicit_weak_classes]
        ),
        "bias_mode": config.bias_mode,
        "train": {
            "seed": config.train.seed,
            "class_weights": None
            if config.train.class_weights is None
            else list(config.train.class_weights),
            "sgd": dataclasses.asdict(config.train.sgd),
        },
    }


def route(model: HarmonyModel, features, counter: PassCounter | None = None) -> np.ndarray:
    """Expert id per sample: 0 = target, g >= 1 = complementary g."""
    if model.is_degenerate:
        n = np.asarray(features).shape[0]
        return np.zeros(n, dtype=np.int64)
    if counter is not None:
        counter.add("conductor", np.asarray(features).shape[0])
    return classifier.predict(model.conductor, features)


def predict(model: HarmonyModel, features, counter: PassCounter | None = None) -> np.ndarray:
    """Routed prediction; each sample passes through exactly one expert."""
    features = np.asarray(features, dtype=np.float64)
    expert_ids = route(model, features, counter)
    out = np.empty(features.shape[0], dtype=np.int64)
    experts = [model.target, *model.complementaries]
    for g, expert in enumerate(experts):
        mask = expert_ids == g
        if not mask.any():
            continue
        if counter is not None:
            counter.add("target" if g == 0 else f"complementary_{g}", int(mask.sum()))
        out[mask] = classifier.predict(expert, features[mask])
    return out


def inference_cost(model: HarmonyModel) -> CostModel:
    """Forward passes per sample: 2 (conductor + one expert), 1 if degenerate."""
    if model.is_degenerate:
        return CostModel(1, {"target": 1})
    return CostModel(2, {"conductor": 1, "selected_expert": 1})


@dataclass(frozen=True)
class ClassDecomposition:
    class_id: int
    n_samples: int
    routed_counts: tuple  # samples of this class sent to expert g
    correct_counts: tuple  # of those, correctly classified
    expert_accuracy: tuple  # correct/routed per expert (0.0 where unused)
    reconstructed_accuracy: float  # sum(correct) / n_samples
    measured_accuracy: float


def decompose_accuracy(model: HarmonyModel, test: Dataset) -> list:
    """Exact per-class split of accuracy by routed expert.

    reconstructed_accuracy is computed from integer counts, so it equals
    measured_accuracy exactly on every dataset.
    """
    if test.n_samples == 0:
        raise DataError("test dataset is empty")
    counts = test.class_counts()
    missing = np.nonzero(counts == 0)[0]
    if missing.size:
        raise DataError(f"classes {missing.tolist()} missing from test data")
    expert_ids = route(model, test.features)
    preds = predict(model, test.features)
    n_experts = 1 + len(model.complementaries)
    rows = []
    for c in range(test.num_classes):
        cls_mask = test.labels == c
        routed, correct = [], []
        for g in range(n_experts):
            sub = cls_mask & (expert_ids == g)
            routed.append(int(sub.sum()))
            correct.append(int((preds[sub] == c).sum()))
        n_c = int(cls_mask.sum())
        total_correct = sum(correct)
        rows.append(
            ClassDecomposition(
                class_id=c,
                n_samples=n_c,
                routed_counts=tuple(routed),
                correct_counts=tuple(correct),
                expert_accuracy=tuple(
                    (cor / rt) if rt else 0.0 for cor, rt in zip(correct, routed)
                ),
                reconstructed_accuracy=total_correct / n_c,
                measured_accuracy=int((preds[cls_mask] == c).sum()) / n_c,
            )
        )
    return rows


def save(model: HarmonyModel, path) -> None:
    members = {"target.clf": classifier.to_bytes(model.target)}
    for i, comp in enumerate(model.complementaries, start=1):
        members[f"complementary_{i}.clf"] = classifier.to_bytes(comp)
    if model.conductor is not None:
        members["conductor.clf"] = classifier.to_bytes(model.conductor)
    manifest = {
        "format": _CONTAINER_FORMAT,
        "version": _CONTAINER_VERSION,
        "num_classes": model.partition.num_classes,
        "partition": {
            "strong": list(model.partition.strong),
            "groups": [list(g) for g in model.partition.groups],
        },
        "config": model.config,
    }
    write_container(path, manifest, members)


def load(path) -> HarmonyModel:
    manifest, members = read_container(path, _CONTAINER_FORMAT)
    if manifest.get("version") != _CONTAINER_VERSION:
        raise DataError(f"unsupported ensemble container version {manifest.get('version')}")
    partition = WeakGroupPartition(
        tuple(manifest["partition"]["strong"]),
        tuple(tuple(g) for g in manifest["partition"]["groups"]),
        manifest["num_classes"],
    )
    target = classifier.from_bytes(members["target.clf"])
    comps = tuple(
        classifier.from_bytes(members[f"complementary_{i}.clf"])
        for i in range(1, len(partition.groups) + 1)
    )
    conductor = (
        classifier.from_bytes(members["conductor.clf"]) if "conductor.clf" in members else None
    )
    return HarmonyModel(target, comps, conductor, partition, manifest["config"])
