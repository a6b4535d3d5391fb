"""Dataset construction: the two-moons generator, CSV ingestion with min-max
normalization, a synthetic sine regression task, and deterministic splits.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .network import DomainError, ShapeError
from .rng import RngStream, as_generator

TASKS = ("regression", "classification")


@dataclass
class Dataset:
    """Feature and target matrices plus normalization metadata."""

    features: np.ndarray
    targets: np.ndarray
    task: str = "regression"
    num_classes: int | None = None
    feature_range: list[tuple[float, float]] | None = None

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.features.ndim != 2 or self.targets.ndim != 2:
            raise ShapeError("features and targets must be matrices")
        if self.features.shape[0] != self.targets.shape[0] or self.features.shape[0] < 1:
            raise ShapeError("features and targets need one or more matching rows")
        if self.task not in TASKS:
            raise DomainError(f"unknown task {self.task!r}")
        if self.task == "classification":
            if self.num_classes is None or self.targets.shape[1] != self.num_classes:
                raise ShapeError("classification targets must be one-hot over num_classes")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def k(self) -> int:
        return self.targets.shape[1]

    def joint(self) -> np.ndarray:
        """Rows of the joint (feature, target) space."""
        return np.hstack([self.features, self.targets])

    def take(self, indices) -> "Dataset":
        return Dataset(
            self.features[indices],
            self.targets[indices],
            self.task,
            self.num_classes,
            self.feature_range,
        )


def one_hot(labels, num_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), np.asarray(labels, dtype=int)] = 1.0
    return out


def two_moons(n: int, noise: float, rng: RngStream | np.random.Generator) -> Dataset:
    """Two interleaved half-circles with Gaussian jitter and one-hot labels.

    Class 0 sits on the upper half-circle (cos t, sin t); class 1 on the
    shifted lower half-circle (1 - cos t, 1/2 - sin t), t in [0, pi].
    """
    if n < 2:
        raise DomainError("two_moons needs n >= 2")
    if noise < 0.0:
        raise DomainError("noise must be >= 0")
    gen = as_generator(rng)
    n0 = (n + 1) // 2
    n1 = n - n0
    t0 = np.linspace(0.0, math.pi, n0)
    t1 = np.linspace(0.0, math.pi, n1)
    pts = np.vstack(
        [
            np.column_stack([np.cos(t0), np.sin(t0)]),
            np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)]),
        ]
    )
    if noise > 0.0:
        pts = pts + noise * gen.standard_normal(pts.shape)
    labels = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
    return Dataset(pts, one_hot(labels, 2), "classification", 2)


def synthetic_sine(n: int, noise: float, rng: RngStream | np.random.Generator) -> Dataset:
    """y = sin(2 pi x) + noise * xi with x uniform on [0, 1]."""
    if n < 1:
        raise DomainError("synthetic_sine needs n >= 1")
    gen = as_generator(rng)
    x = gen.random((n, 1))
    y = np.sin(2.0 * math.pi * x)
    if noise > 0.0:
        y = y + noise * gen.standard_normal((n, 1))
    return Dataset(x, y, "regression")


def load_csv(path, target_columns, normalize: bool = True, mean_pad: bool = False) -> Dataset:
    """Load a numeric table: header row, comma separators, decimal points.

    ``target_columns`` name the target columns; every other column is a
    feature.  With ``normalize``, features are min-max scaled to [0, 1]
    (constant columns map to zero) and the per-column ranges are retained.
    Unparseable or missing cells reject the file with their row numbers
    unless ``mean_pad`` is set, in which case they are filled with the
    column mean.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DomainError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DomainError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        rows = []
        missing: list[tuple[int, int]] = []
        bad_rows: list[int] = []
        for line_no, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != len(header):
                raise DomainError(
                    f"{path}: row {line_no} has {len(raw)} cells, header has {len(header)}"
                )
            vals = np.empty(len(header))
            for j, cell in enumerate(raw):
                try:
                    vals[j] = float(cell)
                except ValueError:
                    if mean_pad:
                        vals[j] = np.nan
                        missing.append((len(rows), j))
                    else:
                        bad_rows.append(line_no)
                        break
            else:
                rows.append(vals)
    if bad_rows:
        raise DomainError(f"{path}: non-numeric cells in rows {sorted(set(bad_rows))}")
    if not rows:
        raise DomainError(f"{path}: no data rows")
    table = np.array(rows)
    if missing:
        col_means = np.nanmean(table, axis=0)
        for i, j in missing:
            table[i, j] = col_means[j]

    targets = list(target_columns)
    for name in targets:
        if name not in header:
            raise DomainError(f"{path}: target column {name!r} not in header {header}")
    t_idx = [header.index(name) for name in targets]
    f_idx = [j for j in range(len(header)) if j not in t_idx]
    if not f_idx:
        raise DomainError(f"{path}: no feature columns left")
    x = table[:, f_idx]
    y = table[:, t_idx]
    feature_range = None
    if normalize:
        lo = x.min(axis=0)
        hi = x.max(axis=0)
        span = hi - lo
        x = np.where(span > 0.0, (x - lo) / np.where(span > 0.0, span, 1.0), 0.0)
        feature_range = [(float(a), float(b)) for a, b in zip(lo, hi)]
    return Dataset(x, y, "regression", feature_range=feature_range)


def denormalize_features(ds: Dataset, features) -> np.ndarray:
    """Invert min-max scaling using the ranges stored on the dataset."""
    if ds.feature_range is None:
        raise DomainError("dataset carries no normalization metadata")
    x = np.asarray(features, dtype=np.float64)
    lo = np.array([r[0] for r in ds.feature_range])
    hi = np.array([r[1] for r in ds.feature_range])
    return x * (hi - lo) + lo


def split(ds: Dataset, fractions, rng: RngStream | np.random.Generator) -> list[Dataset]:
    """Disjoint row partition with sizes set by cumulative rounding."""
    fr = np.asarray(fractions, dtype=np.float64)
    if np.any(fr <= 0.0):
        raise DomainError("split fractions must be positive")
    if abs(fr.sum() - 1.0) > 1e-9:
        raise DomainError(f"split fractions sum to {fr.sum()}, expected 1")
    gen = as_generator(rng)
    perm = gen.permutation(ds.n)
    bounds = np.rint(np.cumsum(fr) * ds.n).astype(int)
    bounds[-1] = ds.n
    sizes = np.diff(np.concatenate([[0], bounds]))
    if np.any(sizes <= 0):
        raise DomainError(f"split of {ds.n} rows by {list(fr)} yields an empty subset")
    parts = []
    start = 0
    for size in sizes:
        parts.append(ds.take(perm[start : start + size]))
        start += size
    return parts
