"""Comparison methods: weighted-loss target, bagging, two-model averaging.

Bagging members are deliberately weakened (fewer epochs, bootstrap
subsample, optionally narrower hidden layers) so the ensemble starts from
low-performance components; the averaging pair combines two full targets.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from harmony import classifier
from harmony.classifier import ClassifierSpec, TrainConfig, TrainedClassifier
from harmony.data import Dataset
from harmony.errors import DataError
from harmony.pipeline import CostModel, PassCounter
from harmony.rng import Prng

_CONTAINER_BAGGING = "harmony-bagging"
_CONTAINER_AVERAGING = "harmony-averaging"


@dataclass(frozen=True)
class WeakeningPolicy:
    epoch_fraction: float = 0.5
    bootstrap_fraction: float = 0.8
    hidden_fraction: float = 1.0

    def __post_init__(self):
        for name in ("epoch_fraction", "bootstrap_fraction", "hidden_fraction"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {value}")

    def weakened_spec(self, spec: ClassifierSpec) -> ClassifierSpec:
        hidden = tuple(max(1, math.floor(h * self.hidden_fraction)) for h in spec.hidden_dims)
        return dataclasses.replace(spec, hidden_dims=hidden)

    def weakened_epochs(self, epochs: int) -> int:
        return max(1, math.floor(epochs * self.epoch_fraction))


@dataclass(frozen=True)
class BaggingEnsemble:
    members: tuple
    policy: WeakeningPolicy

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("ensemble needs at least one member")
        if len({m.spec.output_classes for m in members}) != 1:
            raise ValueError("members must share output_classes")
        object.__setattr__(self, "members", members)


@dataclass(frozen=True)
class AveragingEnsemble:
    members: tuple  # exactly two classifiers with identical spec

    def __post_init__(self):
        members = tuple(self.members)
        if len(members) != 2:
            raise ValueError("averaging ensemble takes exactly two members")
        if members[0].spec != members[1].spec:
            raise ValueError("averaging members must share one spec")
        object.__setattr__(self, "members", members)


def train_weighted_target(
    train: Dataset,
    spec: ClassifierSpec,
    config: TrainConfig,
    lambda_b: float,
    weak,
) -> TrainedClassifier:
    """Target architecture retrained with loss weight lambda_b on weak classes."""
    weak = sorted(int(c) for c in weak)
    if not weak:
        raise ValueError("weak class set must be non-empty")
    if len(weak) >= spec.output_classes or any(
        not 0 <= c < spec.output_classes for c in weak
    ):
        raise ValueError("weak classes must be a proper subset of [0, output_classes)")
    if lambda_b <= 1:
        raise ValueError(f"lambda_b must be > 1, got {lambda_b}")
    weights = np.ones(spec.output_classes)
    weights[weak] = lambda_b
    config = dataclasses.replace(config, class_weights=tuple(weights))
    return classifier.train(train, spec, config)


def train_bagging(
    train: Dataset,
    spec: ClassifierSpec,
    config: TrainConfig,
    n: int,
    policy: WeakeningPolicy,
    seed: int,
) -> BaggingEnsemble:
    """n weakened members on bootstrap resamples; substream-seeded per member."""
    if n < 2:
        raise ValueError(f"bagging needs n >= 2 members, got {n}")
    rng = Prng(seed)
    member_spec = policy.weakened_spec(spec)
    sgd = dataclasses.replace(config.sgd, epochs=policy.weakened_epochs(config.sgd.epochs))
    sample_count = max(1, math.ceil(policy.bootstrap_fraction * train.n_samples))
    members = []
    for i in range(1, n + 1):
        idx = rng.substream(f"bootstrap/{i}").integers(0, train.n_samples, sample_count)
        boot = Dataset(train.features[idx], train.labels[idx], train.num_classes)
        member_cfg = dataclasses.replace(
            config,
            seed=rng.derive_seed(f"member/{i}/init"),
            sgd=dataclasses.replace(sgd, shuffle_seed=rng.derive_seed(f"member/{i}/shuffle")),
        )
        members.append(classifier.train(boot, member_spec, member_cfg))
    return BaggingEnsemble(tuple(members), policy)


def predict_majority(
    ensemble: BaggingEnsemble, features, counter: PassCounter | None = None
) -> np.ndarray:
    """Plurality vote; ties go to the lowest class id among the tied classes."""
    k = ensemble.members[0].spec.output_classes
    n = np.asarray(features).shape[0]
    votes = np.zeros((n, k), dtype=np.int64)
    for i, member in enumerate(ensemble.members, start=1):
        preds = classifier.predict(member, features)
        if counter is not None:
            counter.add(f"member_{i}", n)
        votes[np.arange(n), preds] += 1
    return np.argmax(votes, axis=1).astype(np.int64)


def predict_average(
    ensemble: AveragingEnsemble, features, counter: PassCounter | None = None
) -> np.ndarray:
    """Argmax of the mean of the two probability outputs; ties to lower id."""
    n = np.asarray(features).shape[0]
    p1 = classifier.predict_proba(ensemble.members[0], features)
    p2 = classifier.predict_proba(ensemble.members[1], features)
    if counter is not None:
        counter.add("member_1", n)
        counter.add("member_2", n)
    return average_argmax(p1, p2)


def average_argmax(p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    return np.argmax((p1 + p2) / 2.0, axis=1).astype(np.int64)


def inference_cost_baseline(kind: str, n: int) -> CostModel:
    """Ensembles of n members cost n forward passes per sample."""
    if kind not in ("bagging", "averaging"):
        raise ValueError(f"unknown ensemble kind {kind!r}")
    if n < 1:
        raise ValueError("n must be >= 1")
    if kind == "averaging" and n != 2:
        raise ValueError("averaging ensembles have exactly two members")
    return CostModel(n, {f"member_{i}": 1 for i in range(1, n + 1)})


def save_bagging(ensemble: BaggingEnsemble, path) -> None:
    from harmony.serialize import write_container

    members = {
        f"member_{i}.clf": classifier.to_bytes(m)
        for i, m in enumerate(ensemble.members, start=1)
    }
    manifest = {
        "format": _CONTAINER_BAGGING,
        "version": 1,
        "n_members": len(ensemble.members),
        "policy": dataclasses.asdict(ensemble.policy),
    }
    write_container(path, manifest, members)


def load_bagging(path) -> BaggingEnsemble:
    from harmony.serialize import read_container

    manifest, members = read_container(path, _CONTAINER_BAGGING)
    n = manifest["n_members"]
    loaded = tuple(classifier.from_bytes(members[f"member_{i}.clf"]) for i in range(1, n + 1))
    return BaggingEnsemble(loaded, WeakeningPolicy(**manifest["policy"]))


def save_averaging(ensemble: AveragingEnsemble, path) -> None:
    from harmony.serialize import write_container

    members = {
        f"member_{i}.clf": classifier.to_bytes(m)
        for i, m in enumerate(ensemble.members, start=1)
    }
    write_container(path, {"format": _CONTAINER_AVERAGING, "version": 1}, members)


def load_averaging(path) -> AveragingEnsemble:
    from harmony.serialize import read_container

    manifest, members = read_container(path, _CONTAINER_AVERAGING)
    return AveragingEnsemble(
        (classifier.from_bytes(members["member_1.clf"]), classifier.from_bytes(members["member_2.clf"]))
    )
