"""Dataset construction: CSV/IDX ingestion, synthetic clusters, splitting.

A Dataset is a frozen pair of (features, labels) plus the class count.
All loaders and generators are deterministic; file errors carry 1-based
file line numbers.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from harmony.errors import DataError, GeometryError
from harmony.rng import Prng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray  # n_samples x n_dims float64
    labels: np.ndarray  # n_samples int64, values in [0, num_classes)
    num_classes: int

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if features.ndim != 2 or features.shape[1] < 1:
            raise DataError(f"features must be an n x d matrix, got shape {features.shape}")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise DataError(
                f"labels length {labels.shape} does not match {features.shape[0]} feature rows"
            )
        if self.num_classes < 2:
            raise DataError(f"num_classes must be >= 2, got {self.num_classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DataError("labels must lie in [0, num_classes)")
        if not np.all(np.isfinite(features)):
            raise DataError("features contain non-finite values")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_dims(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian clusters on a simplex, with optional tight overlap groups."""

    num_classes: int
    n_dims: int
    samples_per_class: int
    overlap_groups: tuple = ()  # tuple of tuples of class ids
    separation: float = 6.0
    overlap_separation: float = 1.0
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "overlap_groups", tuple(tuple(int(c) for c in g) for g in self.overlap_groups)
        )
        if self.num_classes < 2:
            raise DataError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.samples_per_class < 1:
            raise DataError("samples_per_class must be >= 1")
        if self.separation <= 0 or self.noise_sigma <= 0:
            raise DataError("separation and noise_sigma must be > 0")
        if not 0 <= self.overlap_separation < self.separation:
            raise DataError("overlap_separation must satisfy 0 <= value < separation")
        seen = set()
        for group in self.overlap_groups:
            if not group:
                raise DataError("overlap groups must be non-empty")
            for c in group:
                if not 0 <= c < self.num_classes:
                    raise DataError(f"overlap group class {c} out of range")
                if c in seen:
                    raise DataError(f"class {c} appears in more than one overlap group")
                seen.add(c)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(not 0 < f < 1 for f in fracs):
            raise DataError(f"split fractions must lie in (0, 1), got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise DataError(f"split fractions must sum to 1, got {sum(fracs)}")


def _parse_float(cell: str, line_no: int, col: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(
            f"row {line_no}, column {col}: could not parse {cell!r} as a real number"
        ) from None
    if not np.isfinite(value):
        raise DataError(f"row {line_no}, column {col}: non-finite value {cell!r}")
    return value


def _parse_label(cell: str, line_no: int) -> int:
    try:
        label = int(cell)
    except ValueError:
        raise DataError(f"row {line_no}: label {cell!r} is not an integer") from None
    if label < 0:
        raise DataError(f"row {line_no}: label {label} is negative")
    return label


def load_csv(path, label_column) -> Dataset:
    """Load a numeric CSV with an integer label column.

    label_column is a 0-based column index or, when the file starts with a
    header line (detected by any non-numeric cell in the first row), a
    column name. num_classes is 1 + max(label).
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = [(i + 1, row) for i, row in enumerate(csv.reader(fh)) if row]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file")

    header = None
    first_line, first_row = rows[0]
    if any(not _is_float(cell) for cell in first_row):
        header = [cell.strip() for cell in first_row]
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path}: no data rows after header")

    arity = len(rows[0][1])
    if isinstance(label_column, int):
        label_idx = label_column
    else:
        if header is None:
            raise DataError(f"{path}: label column {label_column!r} given but file has no header")
        try:
            label_idx = header.index(str(label_column))
        except ValueError:
            raise DataError(f"{path}: no column named {label_column!r} in header") from None
    if not 0 <= label_idx < arity:
        raise DataError(f"{path}: label column index {label_idx} out of range for {arity} columns")
    if arity < 2:
        raise DataError(f"{path}: need at least one feature column besides the label")

    features = np.empty((len(rows), arity - 1), dtype=np.float64)
    labels = np.empty(len(rows), dtype=np.int64)
    for r, (line_no, row) in enumerate(rows):
        if len(row) != arity:
            raise DataError(f"row {line_no}: expected {arity} columns, got {len(row)}")
        labels[r] = _parse_label(row[label_idx], line_no)
        c = 0
        for j, cell in enumerate(row):
            if j == label_idx:
                continue
            features[r, c] = _parse_float(cell, line_no, j)
            c += 1
    return Dataset(features, labels, int(labels.max()) + 1)


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def dump_csv(ds: Dataset, path) -> None:
    """Write a Dataset as CSV (header f0..f{d-1},label; floats round-trip).

    Reloading with load_csv reproduces the Dataset exactly when every class
    occurs at least once (num_classes is recomputed as 1 + max label).
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"f{j}" for j in range(ds.n_dims)] + ["label"])
        for i in range(ds.n_samples):
            writer.writerow([repr(v) for v in ds.features[i]] + [int(ds.labels[i])])


def _read_idx_header(data: bytes, path, expected_magic: int, n_dims: int):
    if len(data) < 4 * (1 + n_dims):
        raise DataError(f"{path}: truncated header")
    magic = struct.unpack(">i", data[:4])[0]
    if magic != expected_magic:
        raise DataError(
            f"{path}: wrong magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    dims = struct.unpack(f">{n_dims}i", data[4 : 4 * (1 + n_dims)])
    return dims, data[4 * (1 + n_dims) :]


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label file pair (big-endian, u8 payload).

    Pixels are scaled to [0, 1] by /255 and images flattened row-major.
    """
    try:
        with open(images_path, "rb") as fh:
            img_data = fh.read()
        with open(labels_path, "rb") as fh:
            lbl_data = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read IDX files: {exc}") from exc

    (n_img, rows, cols), img_payload = _read_idx_header(
        img_data, images_path, IDX_IMAGES_MAGIC, 3
    )
    (n_lbl,), lbl_payload = _read_idx_header(lbl_data, labels_path, IDX_LABELS_MAGIC, 1)
    if n_img != n_lbl:
        raise DataError(f"item count mismatch: {n_img} images vs {n_lbl} labels")
    if n_img < 1:
        raise DataError("IDX files contain no items")
    if len(img_payload) != n_img * rows * cols:
        raise DataError(
            f"{images_path}: payload is {len(img_payload)} bytes, expected {n_img * rows * cols}"
        )
    if len(lbl_payload) != n_lbl:
        raise DataError(f"{labels_path}: payload is {len(lbl_payload)} bytes, expected {n_lbl}")

    features = np.frombuffer(img_payload, dtype=np.uint8).reshape(n_img, rows * cols)
    features = features.astype(np.float64) / 255.0
    labels = np.frombuffer(lbl_payload, dtype=np.uint8).astype(np.int64)
    return Dataset(features, labels, int(labels.max()) + 1)


def _place_centers(spec: SyntheticSpec) -> np.ndarray:
    """Simplex placement: class k sits at (separation/sqrt(2)) * e_k.

    All pairwise center distances equal `separation` exactly; needs
    n_dims >= num_classes. Overlap-group members are then moved onto a
    sphere of radius overlap_separation around their group centroid,
    preserving the centroid.
    """
    k, d = spec.num_classes, spec.n_dims
    if d < k:
        raise GeometryError(
            f"cannot place {k} equally spaced centers in {d} dims; need n_dims >= num_classes"
        )
    centers = np.zeros((k, d))
    scale = spec.separation / np.sqrt(2.0)
    centers[np.arange(k), np.arange(k)] = scale
    for group in spec.overlap_groups:
        idx = list(group)
        centroid = centers[idx].mean(axis=0)
        for c in idx:
            direction = centers[c] - centroid
            norm = np.linalg.norm(direction)
            if norm > 1e-12:
                centers[c] = centroid + spec.overlap_separation * direction / norm
    return centers


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Isotropic Gaussian samples around each class center; seeded per class."""
    centers = _place_centers(spec)
    rng = Prng(spec.seed)
    m, d = spec.samples_per_class, spec.n_dims
    features = np.empty((spec.num_classes * m, d))
    labels = np.empty(spec.num_classes * m, dtype=np.int64)
    for c in range(spec.num_classes):
        stream = rng.substream(f"class/{c}")
        features[c * m : (c + 1) * m] = centers[c] + stream.normal(0.0, spec.noise_sigma, (m, d))
        labels[c * m : (c + 1) * m] = c
    return Dataset(features, labels, spec.num_classes)


def _largest_remainder(n: int, fractions) -> list:
    """Apportion n into integer parts; ties go to the earlier fraction."""
    ideal = [n * f for f in fractions]
    parts = [int(np.floor(x)) for x in ideal]
    order = sorted(range(len(fractions)), key=lambda i: (-(ideal[i] - parts[i]), i))
    for i in order[: n - sum(parts)]:
        parts[i] += 1
    return parts


def stratified_split(ds: Dataset, spec: SplitSpec):
    """Deterministic (train, val, test) partition preserving class ratios.

    Per class, counts follow the largest-remainder rule on the three
    fractions, so each is within one sample of the ideal share.
    """
    counts = ds.class_counts()
    too_few = np.nonzero(counts < 3)[0]
    if too_few.size:
        raise DataError(
            f"stratified_split needs >= 3 samples per class; classes {too_few.tolist()} are short"
        )
    fractions = (spec.train_fraction, spec.val_fraction, spec.test_fraction)
    rng = Prng(spec.seed)
    buckets = ([], [], [])
    for c in range(ds.num_classes):
        class_idx = np.nonzero(ds.labels == c)[0]
        perm = rng.substream(f"class/{c}").permutation(class_idx.size)
        shuffled = class_idx[perm]
        n_train, n_val, _ = _largest_remainder(class_idx.size, fractions)
        buckets[0].append(shuffled[:n_train])
        buckets[1].append(shuffled[n_train : n_train + n_val])
        buckets[2].append(shuffled[n_train + n_val :])
    out = []
    for parts in buckets:
        idx = np.concatenate(parts)
        out.append(Dataset(ds.features[idx], ds.labels[idx], ds.num_classes))
    return tuple(out)
