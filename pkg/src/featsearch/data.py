"""Tabular datasets: CSV ingestion, seeded 80/20 split, descriptive state encoding."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError

CLASSIFICATION = "classification"
REGRESSION = "regression"
TASKS = (CLASSIFICATION, REGRESSION)
MIN_SAMPLES = 10


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    task: str
    feature_names: tuple[str, ...] = ()
    class_labels: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.task not in TASKS:
            raise InputError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise InputError(f"X {self.X.shape} and y {self.y.shape} disagree")
        if not self.feature_names:
            object.__setattr__(
                self, "feature_names", tuple(f"f{i}" for i in range(self.X.shape[1]))
            )

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.X[rows], self.y[rows], self.task, self.feature_names, self.class_labels)


@dataclass(frozen=True)
class SplitDataset:
    train: Dataset
    test: Dataset
    split_seed: int


def make_dataset(X, y, task: str, feature_names=()) -> Dataset:
    """Build a Dataset, relabelling classification targets to 0..k-1."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError("feature matrix must be 2-D with at least one row")
    if not np.isfinite(X).all():
        raise InputError("feature matrix contains missing or non-finite values")
    labels: tuple = ()
    if task == CLASSIFICATION:
        uniq, y = np.unique(y, return_inverse=True)
        labels = tuple(uniq.tolist())
        y = y.astype(np.int64)
    else:
        y = y.astype(np.float64)
        if not np.isfinite(y).all():
            raise InputError("target contains missing or non-finite values")
    return Dataset(X, y, task, tuple(feature_names), labels)


def load_csv(path, task: str, target_column: str | None = None) -> Dataset:
    """Read a numeric CSV with a header row. The target defaults to the last column.

    Comma is the expected separator; a header with more semicolons than commas
    switches to semicolons (the layout of the UCI wine files).
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        first = fh.readline()
        fh.seek(0)
        delim = ";" if first.count(";") > first.count(",") else ","
        reader = csv.reader(fh, delimiter=delim)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path} is empty") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-numeric cell") from None
    if target_column is None:
        target_idx = len(header) - 1
    elif target_column in header:
        target_idx = header.index(target_column)
    else:
        raise InputError(f"target column {target_column!r} not in header {header}")
    table = np.asarray(rows, dtype=np.float64).reshape(-1, len(header))
    bad = np.where(~np.isfinite(table).all(axis=1))[0]
    if bad.size:
        raise InputError(f"{path}: row {bad[0] + 2} has a missing or non-finite value")
    names = [h for j, h in enumerate(header) if j != target_idx]
    X = np.delete(table, target_idx, axis=1)
    return make_dataset(X, table[:, target_idx], task, names)


def split(d: Dataset, seed: int, train_frac: float = 0.8) -> SplitDataset:
    """Seeded shuffle; the first floor(0.8 n) rows train, the rest test.

    This is where data enters the pipeline, so the minimum size is enforced here.
    """
    if d.n_samples < MIN_SAMPLES:
        raise InputError(f"need at least {MIN_SAMPLES} samples, got {d.n_samples}")
    order = np.random.default_rng(seed).permutation(d.n_samples)
    n_train = int(math.floor(train_frac * d.n_samples))
    return SplitDataset(d.subset(order[:n_train]), d.subset(order[n_train:]), seed)


N_STATS = 7


def _stats(A: np.ndarray) -> np.ndarray:
    """count, std, min, max, q25, q50, q75 down the rows of A -> (7, A.shape[1])."""
    n = A.shape[0]
    with np.errstate(all="ignore"):
        std = A.std(axis=0, ddof=1) if n > 1 else np.zeros(A.shape[1])
        q = np.quantile(A, [0.25, 0.5, 0.75], axis=0)
    return np.vstack([np.full(A.shape[1], float(n)), std, A.min(axis=0), A.max(axis=0), q])


def describe(X) -> np.ndarray:
    """Fixed-width (49,) summary of a feature matrix of any width.

    Seven statistics per column give a 7 x p matrix; the same seven statistics
    taken along each of its rows give 7 x 7, flattened row-major.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.size == 0:
        raise InputError("cannot describe an empty matrix")
    first = _stats(X)  # (7, p)
    second = _stats(first.T)  # (7 stats, 7 rows of first)
    return second.T.reshape(-1)


# ---------------------------------------------------------------------------
# bundled datasets

DATA_DIR = Path(__file__).parent / "datasets"
WINE_ENV = "FEATSEARCH_WINE_RED"


def synthetic_product(n: int = 1000, n_features: int = 8, noise: float = 0.1, seed: int = 0) -> Dataset:
    """Regression set with y = f0 * f1 + noise and uniform distractor columns.

    ``noise`` is relative to the standard deviation of the product.
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, n_features))
    prod = X[:, 0] * X[:, 1]
    y = prod + noise * prod.std() * rng.normal(size=n)
    return make_dataset(X, y, REGRESSION)


def load_bundled(name: str) -> Dataset:
    """``synthetic`` or ``wine_red``.

    The wine file is not redistributed; point FEATSEARCH_WINE_RED at a copy
    (semicolon or comma separated, target ``quality`` last) or drop it in
    the package's datasets/ directory as winequality-red.csv.
    """
    import os

    if name == "synthetic":
        path = DATA_DIR / "synthetic_product.csv"
        return load_csv(path, REGRESSION) if path.is_file() else synthetic_product()
    if name == "wine_red":
        path = Path(os.environ.get(WINE_ENV, DATA_DIR / "winequality-red.csv"))
        if not path.is_file():
            raise InputError(
                f"Wine Quality Red not found at {path}; set {WINE_ENV} to a local copy"
            )
        return load_csv(path, CLASSIFICATION)
    raise InputError(f"unknown bundled dataset {name!r}")
