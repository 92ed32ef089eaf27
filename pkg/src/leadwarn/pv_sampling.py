"""Peak-Valley event detection, event-centred resampling and its grid search."""
from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EmptyGrid, NoEvents, SeriesTooShort
from .features import FeatureTable

log = logging.getLogger(__name__)

DEFAULT_GRID = {
    "n": (10, 30, 60),
    "z_th": (1.5, 2.0, 2.5, 3.0),
    "k_max": (100, 500, 1000),
}
# a trailing std this small relative to the mean is treated as exactly zero
STD_RTOL = 1e-12


@dataclass(frozen=True, order=True)
class PVConfig:
    n: int = 30
    z_th: float = 2.0
    k_max: int = 500
    neg_ratio: float = 1.0

    def __post_init__(self):
        if self.n < 2 or self.z_th <= 0 or self.k_max < 1 or self.neg_ratio <= 0:
            raise ValueError(f"invalid PVConfig {self}")

    @property
    def key(self):
        return (self.n, self.z_th, self.k_max)


@dataclass
class PVEvents:
    peaks: list
    valleys: list
    zscores: dict = field(default_factory=dict)

    @property
    def indices(self) -> list:
        return sorted(self.peaks + self.valleys)

    def __len__(self):
        return len(self.peaks) + len(self.valleys)


def trailing_zscores(series, n: int) -> np.ndarray:
    """z_i over series[i-n+1 .. i] for i >= n-1; earlier entries are 0."""
    x = np.asarray(series, dtype=np.float64)
    z = np.zeros(len(x))
    if len(x) < n:
        return z
    win = sliding_window_view(x, n)
    mean = win.mean(axis=1)
    std = np.sqrt(((win - mean[:, None]) ** 2).mean(axis=1))
    cur = x[n - 1:]
    ok = std > STD_RTOL * np.maximum(np.abs(mean), 1.0)
    z[n - 1:] = np.where(ok, (cur - mean) / np.where(ok, std, 1.0), 0.0)
    return z


def detect_peaks_valleys(series, cfg: PVConfig) -> PVEvents:
    x = np.asarray(series, dtype=np.float64)
    if len(x) < cfg.n:
        raise SeriesTooShort(f"series of length {len(x)} shorter than n={cfg.n}")
    z = trailing_zscores(x, cfg.n)
    cand = np.flatnonzero(np.abs(z) >= cfg.z_th)
    if len(cand) > cfg.k_max:
        # largest |z| first, ties to the smaller index (lexsort is stable)
        order = np.lexsort((cand, -np.abs(z[cand])))
        cand = np.sort(cand[order[:cfg.k_max]])
    peaks = [int(i) for i in cand if z[i] > 0]
    valleys = [int(i) for i in cand if z[i] < 0]
    return PVEvents(peaks, valleys, {int(i): float(z[i]) for i in cand})


def resample_pv(table, events: PVEvents, L: int, neg_ratio: float = 1.0,
                rng_seed: int = 0) -> list:
    """Start rows of event-centred windows plus seeded non-event windows.

    ``table`` may be a FeatureTable or just the row count.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    idx = events.indices
    if not idx:
        raise NoEvents("no peak/valley events; fall back to chronological windows")
    N = table if isinstance(table, (int, np.integer)) else len(table)
    if N < L:
        raise ValueError(f"{N} rows cannot hold a window of {L}")
    if idx[0] < 0 or idx[-1] >= N:
        raise IndexError("event index out of range")
    last = N - L
    event_starts = {min(max(i - L // 2, 0), last) for i in idx}

    # a window [s, s+L) is event-free iff no event lies in it
    marks = np.zeros(N + 1, dtype=np.int64)
    marks[np.asarray(idx) + 1] = 1
    csum = np.cumsum(marks)
    starts = np.arange(last + 1)
    free = starts[csum[starts + L] - csum[starts] == 0]
    n_neg = min(math.ceil(neg_ratio * len(idx)), len(free))
    rng = np.random.default_rng(rng_seed)
    neg = rng.choice(free, size=n_neg, replace=False) if n_neg else []
    return sorted(event_starts | {int(s) for s in neg})


def grid_configs(grid: Mapping[str, Sequence] | None = None, neg_ratio: float = 1.0) -> list:
    grid = dict(DEFAULT_GRID if grid is None else grid)
    if any(len(grid.get(k, ())) == 0 for k in ("n", "z_th", "k_max")):
        raise EmptyGrid("pv_grid needs non-empty n, z_th and k_max lists")
    return [PVConfig(int(n), float(z), int(k), neg_ratio)
            for n, z, k in itertools.product(grid["n"], grid["z_th"], grid["k_max"])]


def search_pv_config(table, grid, evaluate: Callable[[PVConfig], float]):
    """argmax of ``evaluate`` over the grid; ties go to the smaller (n, z_th, k_max).

    ``grid`` is either a mapping of candidate lists or an explicit list of
    PVConfig. Returns ``(best_config, best_score, search_log)`` where the log
    lists every evaluated ``(n, z_th, k_max, f1)``.
    """
    configs = grid if isinstance(grid, (list, tuple)) else grid_configs(grid)
    if not configs:
        raise EmptyGrid("empty PV grid")
    scored = []
    for cfg in configs:
        score = float(evaluate(cfg))
        log.info("pv config n=%d z_th=%g k_max=%d f1=%.6f", cfg.n, cfg.z_th, cfg.k_max, score)
        scored.append((cfg, score))
    best_cfg, best_score = None, -np.inf
    for cfg, score in sorted(scored, key=lambda cs: cs[0].key):
        if score > best_score:
            best_cfg, best_score = cfg, score
    search_log = [{"n": c.n, "z_th": c.z_th, "k_max": c.k_max, "f1": s} for c, s in scored]
    return best_cfg, best_score, search_log


def write_search_log(rows, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["n", "z_th", "k_max", "f1"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def baseline_f1_evaluator(train: FeatureTable, val: FeatureTable, L: int, h: int, seed: int = 0):
    """Score a PVConfig by the validation F1 (threshold 0.5) of the logistic
    baseline trained on that config's resampled training windows."""
    from .baseline import LogisticScorer, window_summary, window_targets
    from .metrics import threshold_metrics

    # training windows must keep their horizon target inside the training rows
    usable = len(train) - h * L
    T_val = len(val) // L - h
    if usable < L or T_val < 1:
        raise ValueError("splits too short for the requested L and h")
    val_starts = np.arange(T_val) * L
    Xv = window_summary(val, val_starts, L)
    yv = window_targets(val, val_starts, L, h)
    usd = train.usd_value[:usable]

    def evaluate(cfg: PVConfig) -> float:
        try:
            events = detect_peaks_valleys(usd, cfg)
            starts = np.asarray(resample_pv(usable, events, L, cfg.neg_ratio, seed))
        except (NoEvents, SeriesTooShort):
            # a setting that detects nothing is not a usable PV configuration
            return 0.0
        y = window_targets(train, starts, L, h)
        if y.min() == y.max():
            return 0.0
        clf = LogisticScorer().fit(window_summary(train, starts, L), y)
        return threshold_metrics(clf.predict_proba(Xv), yv)["f1"]

    return evaluate
