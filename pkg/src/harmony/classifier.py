"""Pluggable MLP / softmax-regression classifier with weighted-loss training.

One spec serves every role in the ensemble: the routing model only changes
output_classes. Training is plain mini-batch SGD with momentum, fully
deterministic given (data, spec, config).
"""
from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from harmony import kernels
from harmony.data import Dataset
from harmony.errors import DataError, TrainingError
from harmony.numerics import SgdConfig, as_matrix, xavier_init
from harmony.rng import Prng

ACTIVATIONS = ("relu", "tanh")

_MAGIC = b"HRMCLF"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ClassifierSpec:
    input_dim: int
    hidden_dims: tuple = (64,)
    output_classes: int = 2
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ValueError("all layer dims must be positive")
        if self.output_classes < 2:
            raise ValueError(f"output_classes must be >= 2, got {self.output_classes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    def layer_dims(self) -> list:
        return [self.input_dim, *self.hidden_dims, self.output_classes]


@dataclass(frozen=True)
class TrainConfig:
    sgd: SgdConfig = SgdConfig()
    class_weights: tuple | None = None  # None -> all ones
    seed: int = 0

    def __post_init__(self):
        if self.class_weights is not None:
            weights = tuple(float(w) for w in self.class_weights)
            if any(w <= 0 for w in weights):
                raise ValueError("class_weights must be strictly positive")
            object.__setattr__(self, "class_weights", weights)


@dataclass(frozen=True, eq=False)
class TrainedClassifier:
    spec: ClassifierSpec
    weights: tuple  # per layer, (fan_in x fan_out) float64
    biases: tuple  # per layer, (fan_out,) float64
    metadata: dict

    def __post_init__(self):
        dims = self.spec.layer_dims()
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("layer count does not match spec")
        frozen_w, frozen_b = [], []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.ascontiguousarray(w, dtype=np.float64)
            b = np.ascontiguousarray(b, dtype=np.float64)
            if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise ValueError(f"layer {i} shape {w.shape}/{b.shape} inconsistent with spec")
            w.setflags(write=False)
            b.setflags(write=False)
            frozen_w.append(w)
            frozen_b.append(b)
        object.__setattr__(self, "weights", tuple(frozen_w))
        object.__setattr__(self, "biases", tuple(frozen_b))


def respec_output(spec: ClassifierSpec, k: int) -> ClassifierSpec:
    """Same architecture with the output layer resized to k classes."""
    if k < 2:
        raise ValueError(f"output_classes must be >= 2, got {k}")
    return dataclasses.replace(spec, output_classes=k)


def _activate(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return kernels.relu(pre)
    return kernels.tanh_forward(pre)


def _activation_grad(upstream, pre, activated, activation: str) -> np.ndarray:
    if activation == "relu":
        return kernels.relu_grad(upstream, pre)
    return kernels.tanh_grad(upstream, activated)


def _forward(spec: ClassifierSpec, weights, biases, x: np.ndarray):
    """Returns (logits, layer inputs, hidden pre-activations, hidden activations)."""
    inputs = [x]
    pres, acts = [], []
    h = x
    for w, b in zip(weights[:-1], biases[:-1]):
        pre = kernels.add_row_vector(kernels.matmul(h, w), b)
        h = _activate(pre, spec.activation)
        pres.append(pre)
        acts.append(h)
        inputs.append(h)
    logits = kernels.add_row_vector(kernels.matmul(h, weights[-1]), biases[-1])
    return logits, inputs, pres, acts


def train(train_ds: Dataset, spec: ClassifierSpec, config: TrainConfig) -> TrainedClassifier:
    """Mini-batch SGD on weighted cross-entropy; deterministic given seeds."""
    if train_ds.n_samples == 0:
        raise DataError("training dataset is empty")
    if train_ds.n_dims != spec.input_dim:
        raise DataError(f"dataset has {train_ds.n_dims} dims, spec expects {spec.input_dim}")
    if int(train_ds.labels.max()) >= spec.output_classes:
        raise DataError(
            f"label {int(train_ds.labels.max())} out of range for {spec.output_classes} outputs"
        )
    if config.class_weights is None:
        class_w = np.ones(spec.output_classes)
    else:
        class_w = np.asarray(config.class_weights, dtype=np.float64)
        if class_w.shape != (spec.output_classes,):
            raise DataError(
                f"class_weights length {class_w.shape[0]} != output_classes {spec.output_classes}"
            )

    dims = spec.layer_dims()
    init_rng = Prng(config.seed).substream("init")
    weights = [xavier_init(dims[i], dims[i + 1], init_rng) for i in range(len(dims) - 1)]
    biases = [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]

    sgd = config.sgd
    shuffle_rng = Prng(sgd.shuffle_seed).substream("shuffle")
    features, labels = train_ds.features, train_ds.labels
    n = train_ds.n_samples
    final_loss = 0.0
    for epoch in range(sgd.epochs):
        perm = shuffle_rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, sgd.batch_size):
            idx = perm[start : start + sgd.batch_size]
            xb = np.ascontiguousarray(features[idx])
            yb = labels[idx]
            logits, inputs, pres, acts = _forward(spec, weights, biases, xb)
            probs = kernels.softmax_rows(logits)
            loss, dlogits = kernels.weighted_cross_entropy(probs, yb, class_w)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch + 1}, batch {start // sgd.batch_size + 1}"
                )
            loss_sum += loss * idx.size

            grads_w = [None] * len(weights)
            grads_b = [None] * len(biases)
            upstream = dlogits
            grads_w[-1] = kernels.matmul(inputs[-1], upstream, trans_a=True)
            grads_b[-1] = kernels.col_sums(upstream)
            for layer in range(len(weights) - 2, -1, -1):
                upstream = kernels.matmul(upstream, weights[layer + 1], trans_b=True)
                upstream = _activation_grad(upstream, pres[layer], acts[layer], spec.activation)
                grads_w[layer] = kernels.matmul(inputs[layer], upstream, trans_a=True)
                grads_b[layer] = kernels.col_sums(upstream)

            for i in range(len(weights)):
                weights[i], vel_w[i] = kernels.sgd_step(
                    weights[i], vel_w[i], grads_w[i], sgd.learning_rate, sgd.momentum
                )
                biases[i], vel_b[i] = kernels.sgd_step(
                    biases[i], vel_b[i], grads_b[i], sgd.learning_rate, sgd.momentum
                )
        final_loss = loss_sum / n

    metadata = {
        "final_train_loss": float(final_loss),
        "epochs_run": sgd.epochs,
        "seed": config.seed,
        "class_weights": [float(w) for w in class_w],
    }
    return TrainedClassifier(spec, tuple(weights), tuple(biases), metadata)


def predict_proba(model: TrainedClassifier, features) -> np.ndarray:
    x = as_matrix(features, "features")
    if x.shape[1] != model.spec.input_dim:
        raise DataError(f"features have {x.shape[1]} dims, model expects {model.spec.input_dim}")
    logits, _, _, _ = _forward(model.spec, model.weights, model.biases, x)
    return kernels.softmax_rows(logits)


def predict(model: TrainedClassifier, features) -> np.ndarray:
    """Row-wise argmax of predict_proba; ties go to the lower class id."""
    return np.argmax(predict_proba(model, features), axis=1).astype(np.int64)


def to_bytes(model: TrainedClassifier) -> bytes:
    """Self-describing container: magic, version, JSON header, <f8 blobs."""
    arrays = []
    blobs = []
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays.append({"name": f"W{i}", "shape": list(w.shape)})
        blobs.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        arrays.append({"name": f"b{i}", "shape": list(b.shape)})
        blobs.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    header = {
        "format": "harmony-classifier",
        "version": _FORMAT_VERSION,
        "spec": {
            "input_dim": model.spec.input_dim,
            "hidden_dims": list(model.spec.hidden_dims),
            "output_classes": model.spec.output_classes,
            "activation": model.spec.activation,
        },
        "metadata": model.metadata,
        "arrays": arrays,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    return b"".join(
        [_MAGIC, struct.pack("<HI", _FORMAT_VERSION, len(header_bytes)), header_bytes, *blobs]
    )


def from_bytes(data: bytes) -> TrainedClassifier:
    if len(data) < len(_MAGIC) + 6 or data[: len(_MAGIC)] != _MAGIC:
        raise DataError("not a classifier container (bad magic)")
    version, header_len = struct.unpack("<HI", data[len(_MAGIC) : len(_MAGIC) + 6])
    if version != _FORMAT_VERSION:
        raise DataError(f"unsupported classifier container version {version}")
    offset = len(_MAGIC) + 6
    try:
        header = json.loads(data[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"corrupt classifier header: {exc}") from exc
    offset += header_len
    spec = ClassifierSpec(
        input_dim=header["spec"]["input_dim"],
        hidden_dims=tuple(header["spec"]["hidden_dims"]),
        output_classes=header["spec"]["output_classes"],
        activation=header["spec"]["activation"],
    )
    arrays = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * 8
        if offset + nbytes > len(data):
            raise DataError("classifier container truncated")
        arrays[entry["name"]] = (
            np.frombuffer(data, dtype="<f8", count=count, offset=offset)
            .astype(np.float64)
            .reshape(entry["shape"])
        )
        offset += nbytes
    if offset != len(data):
        raise DataError("classifier container has trailing bytes")
    n_layers = len(spec.layer_dims()) - 1
    weights = tuple(arrays[f"W{i}"] for i in range(n_layers))
    biases = tuple(arrays[f"b{i}"] for i in range(n_layers))
    return TrainedClassifier(spec, weights, biases, header["metadata"])


def save(model: TrainedClassifier, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(model))


def load(path) -> TrainedClassifier:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    return from_bytes(data)
