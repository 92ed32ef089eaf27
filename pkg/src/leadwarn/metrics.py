"""Ranking and threshold metrics for the positive (anomalous) class."""
from __future__ import annotations

import warnings

import numpy as np
from scipy.stats import rankdata

from .errors import NoPositives, OneClassOnly

THRESHOLD = 0.5


def _prep(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(np.int64)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    return s, y


def pr_curve(scores, labels):
    """Precision/recall at each distinct score threshold, descending.

    Equal scores form one threshold step.
    """
    s, y = _prep(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise NoPositives("precision-recall needs at least one positive")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(s[1:] != s[:-1]), len(s) - 1]
    tp = np.cumsum(y)[last]
    predicted = last + 1
    precision = tp / predicted
    recall = tp / n_pos
    return precision, recall, s[last]


def pr_auc(scores, labels) -> float:
    """Step-wise average precision: sum_k (R_k - R_{k-1}) * P_k."""
    s, y = _prep(scores, labels)
    if y.sum() == 0:
        raise NoPositives("PR-AUC undefined without positives")
    if y.sum() == len(y):
        warnings.warn("all labels positive; PR-AUC set to 1.0", RuntimeWarning)
        return 1.0
    precision, recall, _ = pr_curve(s, y)
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def roc_curve(scores, labels):
    s, y = _prep(scores, labels)
    n_pos, n_neg = int(y.sum()), int(len(y) - y.sum())
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly("ROC needs both classes")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(s[1:] != s[:-1]), len(s) - 1]
    tp = np.cumsum(y)[last]
    fp = last + 1 - tp
    return np.r_[0.0, fp / n_neg], np.r_[0.0, tp / n_pos], np.r_[np.inf, s[last]]


def roc_auc(scores, labels) -> float:
    """Mann-Whitney U / (n_pos * n_neg); tied pairs count one half."""
    s, y = _prep(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly("ROC-AUC needs both classes")
    ranks = rankdata(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def threshold_metrics(scores, labels, threshold: float = THRESHOLD) -> dict:
    """Confusion-matrix metrics; undefined ratios are 0 and flagged."""
    s, y = _prep(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    tn = int(np.sum(~pred & (y == 0)))
    degenerate = []
    precision = tp / (tp + fp) if tp + fp else 0.0
    if tp + fp == 0:
        degenerate.append("precision")
    recall = tp / (tp + fn) if tp + fn else 0.0
    if tp + fn == 0:
        degenerate.append("recall")
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        degenerate.append("f1")
    accuracy = (tp + tn) / len(y) if len(y) else 0.0
    return {"accuracy": accuracy, "precision": precision, "recall": recall, "f1": f1,
            "tp": tp, "fp": fp, "fn": fn, "tn": tn, "degenerate": degenerate}


def metrics_report(scores, labels, threshold: float = THRESHOLD) -> dict:
    """Full metric suite; ranking metrics are None when a class is missing."""
    s, y = _prep(scores, labels)
    out = threshold_metrics(s, y, threshold)
    n_pos = int(y.sum())
    out.update({"threshold": threshold, "n_pos": n_pos, "n_neg": int(len(y) - n_pos)})
    if 0 < n_pos < len(y):
        out["roc_auc"] = roc_auc(s, y)
        out["pr_auc"] = pr_auc(s, y)
    else:
        out["roc_auc"] = None
        out["pr_auc"] = None if n_pos == 0 else 1.0
    return out
