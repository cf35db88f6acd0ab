"""The downstream model and score used as the search objective."""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import metrics
from .data import CLASSIFICATION, REGRESSION
from .errors import InputError
from .trees import DecisionTree, RandomForest, Ridge

MODELS = ("random_forest", "decision_tree", "ridge")
N_FOLDS = 5


@dataclass
class EvalConfig:
    model: str = "random_forest"
    n_trees: int = 10
    max_depth: int = 10
    min_samples_leaf: int = 1
    max_features: object = "auto"  # auto: sqrt(p) for classification, all p for regression
    bootstrap: bool = True
    metric: str | None = None  # None: f1 for classification, one_minus_rae for regression
    cv_seed: int = 0

    def metric_for(self, task: str) -> str:
        name = self.metric or ("f1" if task == CLASSIFICATION else "one_minus_rae")
        allowed = metrics.CLASSIFICATION_METRICS if task == CLASSIFICATION else metrics.REGRESSION_METRICS
        if name not in allowed:
            raise InputError(f"metric {name!r} does not fit a {task} task")
        return name

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Score:
    value: float
    metric: str


def make_model(cfg: EvalConfig, n_classes: int, seed: int):
    if cfg.model == "random_forest":
        max_features = cfg.max_features
        if max_features == "auto":
            max_features = "sqrt" if n_classes else None
        return RandomForest(
            n_classes, cfg.n_trees, cfg.max_depth, cfg.min_samples_leaf,
            max_features, cfg.bootstrap, seed,
        )
    if cfg.model == "decision_tree":
        return DecisionTree(n_classes, cfg.max_depth, cfg.min_samples_leaf, None, seed)
    if cfg.model == "ridge":
        return Ridge(n_classes)
    raise InputError(f"unknown model {cfg.model!r}; choose from {MODELS}")


def folds(y, task: str, seed: int, k: int = N_FOLDS) -> list[np.ndarray]:
    """Seeded k-fold assignment; stratified by class for classification."""
    rng = np.random.default_rng(seed)
    fold_of = np.empty(y.shape[0], dtype=np.int64)
    if task == CLASSIFICATION:
        offset = 0
        for c in np.unique(y):
            members = np.flatnonzero(y == c)
            members = members[rng.permutation(members.shape[0])]
            fold_of[members] = (np.arange(members.shape[0]) + offset) % k
            offset += members.shape[0]
    else:
        order = rng.permutation(y.shape[0])
        fold_of[order] = np.arange(y.shape[0]) % k
    return [np.flatnonzero(fold_of == i) for i in range(k)]


def _score(metric_name, y_true, model, X_test):
    fn = metrics.ALL_METRICS[metric_name]
    if metric_name == "rocauc":
        raw = model.predict_raw(X_test)
        return fn(y_true, raw)
    return fn(y_true, model.predict(X_test))


def train_eval(X, y, task: str, cfg: EvalConfig | None = None) -> Score:
    """Mean held-out score over 5 folds. Deterministic given ``cfg.cv_seed``."""
    cfg = cfg or EvalConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if not np.isfinite(X).all():
        raise InputError("feature matrix has non-finite values; filter invalid segments first")
    name = cfg.metric_for(task)
    n_classes = 0
    if task == CLASSIFICATION:
        n_classes = int(y.max()) + 1
        if np.unique(y).shape[0] < 2:
            raise InputError("classification needs at least two classes")
    elif task != REGRESSION:
        raise InputError(f"unknown task {task!r}")
    all_rows = np.arange(y.shape[0])
    seeds = np.random.SeedSequence(cfg.cv_seed).generate_state(N_FOLDS)
    values = []
    for i, test_rows in enumerate(folds(y, task, cfg.cv_seed)):
        train_rows = np.setdiff1d(all_rows, test_rows, assume_unique=True)
        model = make_model(cfg, n_classes, int(seeds[i]))
        model.fit(X[train_rows], y[train_rows])
        values.append(_score(name, y[test_rows], model, X[test_rows]))
    return Score(float(np.mean(values)), name)


def holdout_score(X_train, y_train, X_test, y_test, task: str, cfg: EvalConfig | None = None) -> Score:
    """Fit on one set, score on another (used for the final test-split report)."""
    cfg = cfg or EvalConfig()
    name = cfg.metric_for(task)
    n_classes = int(max(y_train.max(), y_test.max())) + 1 if task == CLASSIFICATION else 0
    model = make_model(cfg, n_classes, cfg.cv_seed)
    model.fit(np.asarray(X_train, dtype=np.float64), y_train)
    return Score(float(_score(name, y_test, model, np.asarray(X_test, dtype=np.float64))), name)
