"""Datasets: CSV ingestion and seeded Gaussian-blob generators."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import FormatError, ParameterError


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    classes: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float32)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2:
            raise ParameterError("features must be a 2-D matrix")
        if y.shape != (x.shape[0],):
            raise ParameterError("need exactly one label per row")
        if self.classes < 2:
            raise ParameterError("need at least two classes")
        if y.size and (y.min() < 0 or y.max() >= self.classes):
            raise ParameterError(f"labels must lie in [0, {self.classes})")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.size

    @property
    def width(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.features[rows], self.labels[rows], self.classes)

    def split(self, test_fraction: float, seed: int) -> tuple["Dataset", "Dataset"]:
        """Stratified train/test split."""
        rng = np.random.default_rng(seed)
        train, test = [], []
        for c in range(self.classes):
            idx = rng.permutation(np.flatnonzero(self.labels == c))
            cut = int(round(len(idx) * test_fraction))
            test.extend(idx[:cut])
            train.extend(idx[cut:])
        return self.subset(np.sort(train)), self.subset(np.sort(test))

    def sample_fraction(self, fraction: float, seed: int) -> "Dataset":
        """Stratified subsample keeping at least one row per class."""
        if not 0.0 < fraction <= 1.0:
            raise ParameterError(f"fraction must lie in (0, 1], got {fraction}")
        rng = np.random.default_rng(seed)
        rows = []
        for c in range(self.classes):
            idx = rng.permutation(np.flatnonzero(self.labels == c))
            if idx.size:
                rows.extend(idx[:max(1, int(round(idx.size * fraction)))])
        return self.subset(np.sort(rows))


def synth_blobs(classes: int = 10, dims: int = 64, per_class: int = 100, seed: int = 0,
                separation: float = 1.0, clusters_per_class: int = 1) -> Dataset:
    """Seeded Gaussian clusters with unit within-cluster noise.

    Each centre coordinate is drawn from ``N(0, separation**2)``, so two
    centres differ by ``separation * sqrt(2)`` noise units per dimension on
    average. ``clusters_per_class > 1`` makes classes multimodal.
    """
    if classes < 2 or dims < 1 or per_class < 1 or clusters_per_class < 1:
        raise ParameterError("classes >= 2, dims >= 1, per_class >= 1 required")
    rng = np.random.default_rng(seed)
    centres = rng.normal(0.0, separation, size=(classes, clusters_per_class, dims))
    xs, ys = [], []
    for c in range(classes):
        which = rng.integers(0, clusters_per_class, size=per_class)
        xs.append(centres[c, which] + rng.normal(0.0, 1.0, size=(per_class, dims)))
        ys.append(np.full(per_class, c))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    order = rng.permutation(y.size)
    return Dataset(x[order].astype(np.float32), y[order], classes)


def load_csv(path, classes: int) -> Dataset:
    """Rows are ``label,feature,feature,...``; blank lines are skipped."""
    if classes < 2:
        raise ParameterError("need at least two classes")
    xs, ys, width = [], [], None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                label = int(row[0])
                feats = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}", "csv", lineno) from exc
            if not feats:
                raise FormatError(f"line {lineno}: no features", "csv", lineno)
            if not 0 <= label < classes:
                raise FormatError(f"line {lineno}: label {label} outside [0, {classes})", "csv", lineno)
            if width is None:
                width = len(feats)
            elif len(feats) != width:
                raise FormatError(f"line {lineno}: {len(feats)} features, expected {width}", "csv", lineno)
            xs.append(feats)
            ys.append(label)
    if not ys:
        raise FormatError("no rows", "csv", 0)
    return Dataset(np.array(xs, dtype=np.float32), np.array(ys), classes)


def load_features(path) -> np.ndarray:
    """Unlabelled rows ``feature,feature,...`` for inference; blank lines are skipped."""
    xs = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                feats = [float(v) for v in row]
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}", "csv", lineno) from exc
            if xs and len(feats) != len(xs[0]):
                raise FormatError(f"line {lineno}: {len(feats)} features, expected {len(xs[0])}", "csv", lineno)
            xs.append(feats)
    if not xs:
        raise FormatError("no rows", "csv", 0)
    return np.array(xs, dtype=np.float32)
