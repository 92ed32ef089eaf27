"""Deterministic logistic scorer over window summary statistics.

Used as the cheap classifier inside both grid searches (PV hyperparameters
and window/horizon). L2-regularized, fitted with L-BFGS from a zero start,
so results depend only on the data.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

from .features import MODEL_FEATURES, FeatureTable


def window_summary(table: FeatureTable, starts, L: int) -> np.ndarray:
    """Per-window mean and std of the behavioural feature columns."""
    X = table.matrix(MODEL_FEATURES)
    starts = np.asarray(starts, dtype=np.int64)
    if len(starts) == 0:
        return np.zeros((0, 2 * X.shape[1]))
    idx = starts[:, None] + np.arange(L)[None, :]
    win = X[idx]
    return np.hstack([win.mean(axis=1), win.std(axis=1)])


def window_targets(table: FeatureTable, starts, L: int, h: int) -> np.ndarray:
    """1 iff any row of the window that starts ``h`` frames later is abnormal."""
    starts = np.asarray(starts, dtype=np.int64) + h * L
    idx = starts[:, None] + np.arange(L)[None, :]
    return table.label[idx].max(axis=1).astype(np.int64)


class LogisticScorer:
    def __init__(self, l2: float = 1e-2, max_iter: int = 200):
        self.l2 = l2
        self.max_iter = max_iter

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self.mu = X.mean(axis=0)
        self.sd = X.std(axis=0)
        self.sd[self.sd == 0] = 1.0
        Z = np.hstack([(X - self.mu) / self.sd, np.ones((len(X), 1))])
        n = len(X)

        def objective(w):
            s = Z @ w
            loss = np.sum(np.logaddexp(0.0, s) - y * s) / n + 0.5 * self.l2 * w[:-1] @ w[:-1]
            p = 0.5 * (1.0 + np.tanh(0.5 * s))
            g = Z.T @ (p - y) / n
            g[:-1] += self.l2 * w[:-1]
            return loss, g

        res = minimize(objective, np.zeros(Z.shape[1]), jac=True, method="L-BFGS-B",
                       options={"maxiter": self.max_iter})
        self.w = res.x
        return self

    def predict_proba(self, X):
        Z = np.hstack([(np.asarray(X) - self.mu) / self.sd, np.ones((len(X), 1))])
        s = np.clip(Z @ self.w, -500, 500)
        return 1.0 / (1.0 + np.exp(-s))
