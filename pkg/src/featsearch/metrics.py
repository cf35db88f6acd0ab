"""Classification and regression scores. Higher is always better."""
from __future__ import annotations

import numpy as np

from .errors import InputError


class UndefinedMetricError(InputError):
    pass


def _pair(y_true, y_pred):
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape[0] != y_pred.shape[0]:
        raise InputError(f"length mismatch: {y_true.shape[0]} vs {y_pred.shape[0]}")
    return y_true, y_pred


def _prf(y_true, y_pred):
    y_true, y_pred = _pair(y_true, y_pred)
    labels = np.union1d(y_true, y_pred)
    p, r, f = [], [], []
    for c in labels:
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        p.append(prec)
        r.append(rec)
        f.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return float(np.mean(p)), float(np.mean(r)), float(np.mean(f))


def precision(y_true, y_pred) -> float:
    """Macro-averaged over the labels seen in either argument."""
    return _prf(y_true, y_pred)[0]


def recall(y_true, y_pred) -> float:
    return _prf(y_true, y_pred)[1]


def f1(y_true, y_pred) -> float:
    return _prf(y_true, y_pred)[2]


def _binary_auc(pos_mask, scores):
    # Mann-Whitney U with average ranks for ties
    from scipy.stats import rankdata

    ranks = rankdata(scores)
    n_pos = pos_mask.sum()
    n_neg = pos_mask.shape[0] - n_pos
    return (ranks[pos_mask].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


def rocauc(y_true, scores) -> float:
    """ROC-AUC. ``scores`` is 1-D (binary, score of the positive class) or
    (n, n_classes) for one-vs-rest macro averaging over classes present in y_true."""
    y_true, scores = _pair(y_true, scores)
    present = np.unique(y_true)
    if present.shape[0] < 2:
        raise UndefinedMetricError("ROC-AUC is undefined when y_true has a single class")
    if scores.ndim == 1:
        if present.shape[0] != 2:
            raise InputError("1-D scores need binary labels")
        return float(_binary_auc(y_true == present[1], scores))
    return float(np.mean([_binary_auc(y_true == c, scores[:, int(c)]) for c in present]))


def _regression(y_true, y_pred):
    y_true, y_pred = _pair(y_true, y_pred)
    if y_true.shape[0] < 2:
        raise InputError("need at least two values")
    return y_true.astype(np.float64), y_pred.astype(np.float64)


def one_minus_rae(y_true, y_pred) -> float:
    y_true, y_pred = _regression(y_true, y_pred)
    denom = np.abs(y_true - y_true.mean()).sum()
    if denom == 0:
        raise UndefinedMetricError("RAE is undefined for a constant target")
    return float(1.0 - np.abs(y_true - y_pred).sum() / denom)


def one_minus_mae(y_true, y_pred) -> float:
    y_true, y_pred = _regression(y_true, y_pred)
    return float(1.0 - np.mean(np.abs(y_true - y_pred)))


def one_minus_mse(y_true, y_pred) -> float:
    y_true, y_pred = _regression(y_true, y_pred)
    return float(1.0 - np.mean((y_true - y_pred) ** 2))


def one_minus_rmse(y_true, y_pred) -> float:
    y_true, y_pred = _regression(y_true, y_pred)
    return float(1.0 - np.sqrt(np.mean((y_true - y_pred) ** 2)))


CLASSIFICATION_METRICS = {"f1": f1, "precision": precision, "recall": recall, "rocauc": rocauc}
REGRESSION_METRICS = {
    "one_minus_rae": one_minus_rae,
    "one_minus_mae": one_minus_mae,
    "one_minus_mse": one_minus_mse,
    "one_minus_rmse": one_minus_rmse,
}
ALL_METRICS = {**CLASSIFICATION_METRICS, **REGRESSION_METRICS}
