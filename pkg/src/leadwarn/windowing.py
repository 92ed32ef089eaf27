"""Frame the feature stream into horizon-aligned supervised windows.

A frame is ``L`` consecutive rows. Frame ``t`` predicts whether frame
``t + h`` contains an abnormal row; the alert is timestamped ``h`` frame
durations before that frame starts.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import EmptyCandidates, HorizonExceedsFrames, TooFewRows
from .features import FeatureTable

DEFAULT_W_CANDIDATES = (5, 10, 15, 30, 60)
DEFAULT_H_CANDIDATES = (5, 10, 15, 30, 60)
GRID_COLUMNS = ("window", "horizon", "accuracy", "recall", "precision", "f1", "roc_auc", "pr_auc")


@dataclass(frozen=True)
class Frame:
    index: int
    start: int          # first row (inclusive)
    stop: int           # last row + 1
    rows: FeatureTable

    @property
    def label(self) -> int:
        return int(self.rows.label.max())

    @property
    def t_start(self) -> int:
        return int(self.rows.timestamp[0])


@dataclass(frozen=True)
class LabeledWindow:
    index: int
    rows: FeatureTable
    target: int
    t_alert: int
    t_event: int
    start: int = 0
    stop: int = 0


@dataclass(frozen=True)
class WindowSpec:
    """Minute-valued window/horizon plus the rule converting them to rows.

    ``seconds_per_row`` is the median inter-row spacing of the training
    split; a window spans ``round(w * 60 / seconds_per_row)`` rows (at least
    one) and the horizon is rounded up to whole frames.
    """

    w_minutes: float
    h_minutes: float
    seconds_per_row: float = 60.0

    def __post_init__(self):
        if self.w_minutes <= 0 or self.h_minutes <= 0:
            raise ValueError("window and horizon must be positive")

    @property
    def rows_per_window(self) -> int:
        return max(1, int(round(self.w_minutes * 60.0 / self.seconds_per_row)))

    @property
    def horizon_frames(self) -> int:
        return max(1, math.ceil(self.h_minutes / self.w_minutes))


def median_spacing(timestamps) -> float:
    ts = np.asarray(timestamps, dtype=np.float64)
    if len(ts) < 2:
        return 1.0
    return max(float(np.median(np.diff(ts))), 1e-9)


def frame_duration(timestamps, L: int) -> int:
    """Integer seconds per frame, so alert-time arithmetic stays exact."""
    return max(1, int(round(L * median_spacing(timestamps))))


def frame_windows(table: FeatureTable, L: int, offset: int = 0) -> list[Frame]:
    """``floor((N - offset) / L)`` non-overlapping frames; the remainder is dropped."""
    if L < 1:
        raise ValueError("L must be >= 1")
    n = len(table) - offset
    if n < L:
        raise TooFewRows(f"{n} rows cannot fill one frame of {L}")
    T = n // L
    return [Frame(t, offset + t * L, offset + (t + 1) * L,
                  table.slice(offset + t * L, offset + (t + 1) * L)) for t in range(T)]


def align_labels(frames: Sequence[Frame], h: int, duration: int | None = None) -> list[LabeledWindow]:
    """Attach the target of frame ``t + h`` to frame ``t``; drops the last ``h``."""
    if h < 1:
        raise ValueError("h must be >= 1")
    if h >= len(frames):
        raise HorizonExceedsFrames(f"horizon {h} needs more than {len(frames)} frames")
    if duration is None:
        L = frames[0].stop - frames[0].start
        ts = np.concatenate([f.rows.timestamp for f in frames])
        duration = frame_duration(ts, L)
    out = []
    for t in range(len(frames) - h):
        target_frame = frames[t + h]
        t_event = target_frame.t_start
        out.append(LabeledWindow(frames[t].index, frames[t].rows, target_frame.label,
                                 t_event - h * duration, t_event,
                                 frames[t].start, frames[t].stop))
    return out


def _select_key(spec: WindowSpec, metrics: dict):
    # max PR-AUC, then longer horizon, then shorter window
    return (metrics["pr_auc"], spec.h_minutes, -spec.w_minutes)


def search_window_horizon(table: FeatureTable | None, candidates_w: Iterable = DEFAULT_W_CANDIDATES,
                          candidates_h: Iterable = DEFAULT_H_CANDIDATES,
                          evaluate: Callable | None = None, seconds_per_row: float | None = None):
    """Grid search over (w, h); returns ``(best WindowSpec, metrics rows)``.

    ``evaluate(table, spec)`` must return a dict with the grid metric keys;
    the default is :func:`logistic_window_evaluator`.
    """
    ws, hs = list(candidates_w), list(candidates_h)
    if not ws or not hs:
        raise EmptyCandidates("window and horizon candidate sets must be non-empty")
    if evaluate is None:
        evaluate = logistic_window_evaluator
    if seconds_per_row is None:
        seconds_per_row = 60.0 if table is None else median_spacing(
            table.timestamp[: max(2, int(0.6 * len(table)))])
    rows, best = [], None
    for w in ws:
        for h in hs:
            spec = WindowSpec(w, h, seconds_per_row)
            metrics = evaluate(table, spec)
            row = {"window": w, "horizon": h}
            row.update({k: float(metrics[k]) for k in GRID_COLUMNS[2:]})
            rows.append(row)
            if best is None or _select_key(spec, metrics) > _select_key(*best):
                best = (spec, metrics)
    return best[0], rows


def write_grid_csv(rows: Sequence[dict], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=GRID_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in GRID_COLUMNS})


def logistic_window_evaluator(table: FeatureTable, spec: WindowSpec,
                              fractions=(0.6, 0.2, 0.2)) -> dict:
    """Fit the logistic baseline on the chronological train split, score validation."""
    from .baseline import LogisticScorer, window_summary, window_targets
    from .metrics import metrics_report
    from .train_eval import chronological_split

    L, h = spec.rows_per_window, spec.horizon_frames
    T = len(table) // L
    if T - h < 5:
        return {k: 0.0 for k in GRID_COLUMNS[2:]}
    starts = np.arange(T - h) * L
    y = window_targets(table, starts, L, h)
    X = window_summary(table, starts, L)
    split = chronological_split(len(starts), fractions)
    tr, va = split.train, split.val
    if y[tr].min() == y[tr].max() or y[va].max() == 0:
        return {k: 0.0 for k in GRID_COLUMNS[2:]}
    clf = LogisticScorer().fit(X[tr], y[tr])
    report = metrics_report(clf.predict_proba(X[va]), y[va])
    return {k: report[k] for k in GRID_COLUMNS[2:]}
