"""Confusion statistics, weak-class detection, and weak-class grouping.

Per-class accuracy, its mean, and its population variance (divide by K)
are the metrics every experiment row reports. Weak classes are those more
than delta below the mean; mutually confused weak classes are grouped by
connected components of the thresholded confusion graph.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from harmony.errors import DataError, WeakDetectionError


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray  # K x K int64; rows = true class, cols = predicted

    def __post_init__(self):
        counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1] or counts.shape[0] < 2:
            raise ValueError(f"confusion counts must be K x K with K >= 2, got {counts.shape}")
        if counts.min() < 0:
            raise ValueError("confusion counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)


@dataclass(frozen=True, eq=False)
class PerClassReport:
    per_class_accuracy: np.ndarray
    mean: float
    variance: float  # population convention: divide by K
    support: np.ndarray

    @classmethod
    def from_accuracies(cls, accuracies, support=None) -> "PerClassReport":
        acc = np.asarray(accuracies, dtype=np.float64)
        if acc.ndim != 1 or acc.size < 2:
            raise ValueError("need at least two per-class accuracies")
        if acc.min() < 0 or acc.max() > 1:
            raise ValueError("accuracies must lie in [0, 1]")
        if support is None:
            support = np.ones(acc.size, dtype=np.int64)
        support = np.asarray(support, dtype=np.int64)
        mean = float(acc.mean())
        variance = float(np.mean((acc - mean) ** 2))
        return cls(acc, mean, variance, support)


@dataclass(frozen=True)
class WeakGroupPartition:
    """Strong classes plus ordered disjoint groups of weak classes."""

    strong: tuple
    groups: tuple  # tuple of tuples, each one complementary model's classes
    num_classes: int

    def __post_init__(self):
        strong = tuple(sorted(int(c) for c in self.strong))
        groups = tuple(tuple(sorted(int(c) for c in g)) for g in self.groups)
        if not strong:
            raise WeakDetectionError("no strong classes left; routed ensemble undefined")
        if any(not g for g in groups):
            raise ValueError("weak groups must be non-empty")
        members = [c for g in groups for c in g] + list(strong)
        if sorted(members) != list(range(self.num_classes)):
            raise ValueError("partition must cover [0, num_classes) without overlap")
        object.__setattr__(self, "strong", strong)
        object.__setattr__(self, "groups", groups)

    def weak_classes(self) -> tuple:
        return tuple(sorted(c for g in self.groups for c in g))

    def group_labels(self) -> np.ndarray:
        """Vector mapping class id -> 0 for strong, g (1-based) for group g."""
        mapping = np.zeros(self.num_classes, dtype=np.int64)
        for g, group in enumerate(self.groups, start=1):
            for c in group:
                mapping[c] = g
        return mapping


def confusion_matrix(predicted, truth, num_classes: int) -> ConfusionMatrix:
    predicted = np.asarray(predicted, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise ValueError("predicted and truth must be equal-length vectors")
    if predicted.size and (
        min(predicted.min(), truth.min()) < 0
        or max(predicted.max(), truth.max()) >= num_classes
    ):
        raise ValueError(f"labels out of range for {num_classes} classes")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (truth, predicted), 1)
    return ConfusionMatrix(counts)


def per_class_report(cm: ConfusionMatrix) -> PerClassReport:
    """Diagonal rates, their mean, and their population variance."""
    row_sums = cm.row_sums()
    empty = np.nonzero(row_sums == 0)[0]
    if empty.size:
        raise DataError(f"classes {empty.tolist()} have zero evaluation support")
    acc = np.diagonal(cm.counts) / row_sums
    return PerClassReport.from_accuracies(acc, row_sums)


def detect_weak_classes(report: PerClassReport, delta: float) -> tuple:
    """Classes with accuracy below mean - delta, ascending ids."""
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    weak = tuple(np.nonzero(report.per_class_accuracy < report.mean - delta)[0].tolist())
    if len(weak) == report.per_class_accuracy.size:
        raise WeakDetectionError("every class detected as weak; no strong class left")
    return weak


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def group_weak_classes(
    cm: ConfusionMatrix, weak, coupling_threshold: float
) -> WeakGroupPartition:
    """Partition weak classes into connected components of the confusion graph.

    Edge (i, j) exists when the symmetric confusion rate
    (counts[i][j]/rowsum_i + counts[j][i]/rowsum_j) / 2 reaches the
    threshold. Groups are ordered by their smallest member.
    """
    k = cm.num_classes
    weak = sorted(int(c) for c in weak)
    if any(not 0 <= c < k for c in weak):
        raise ValueError("weak class ids out of range")
    if len(weak) == k:
        raise WeakDetectionError("weak set covers every class; no strong class left")
    row_sums = cm.row_sums()
    uf = _UnionFind(weak)
    for a_pos, i in enumerate(weak):
        for j in weak[a_pos + 1 :]:
            rate_ij = cm.counts[i, j] / row_sums[i] if row_sums[i] else 0.0
            rate_ji = cm.counts[j, i] / row_sums[j] if row_sums[j] else 0.0
            if (rate_ij + rate_ji) / 2.0 >= coupling_threshold:
                uf.union(i, j)
    components = {}
    for c in weak:
        components.setdefault(uf.find(c), []).append(c)
    groups = tuple(tuple(sorted(g)) for _, g in sorted(components.items()))
    strong = tuple(c for c in range(k) if c not in set(weak))
    return WeakGroupPartition(strong, groups, k)


@dataclass(frozen=True)
class GroupAccuracy:
    strong: float
    groups: tuple  # support-weighted mean accuracy per weak group


def group_accuracy(report: PerClassReport, partition: WeakGroupPartition) -> GroupAccuracy:
    """Support-weighted mean accuracy over the strong set and each weak group."""
    if partition.num_classes != report.per_class_accuracy.size:
        raise ValueError("partition and report class counts differ")

    def weighted(ids) -> float:
        ids = list(ids)
        support = report.support[ids]
        total = support.sum()
        if total == 0:
            raise DataError(f"classes {ids} have zero support")
        return float((report.per_class_accuracy[ids] * support).sum() / total)

    return GroupAccuracy(weighted(partition.strong), tuple(weighted(g) for g in partition.groups))
