"""Chronological splits, the training loop and the ablation harness.

Everything is keyed by window *start row*: a window is ``L`` rows starting
at ``s`` and its target is the window starting at ``s + h*L``. Chronological
windows start at multiples of ``L``; peak/valley resampling adds windows at
arbitrary offsets, whose context frames sit at the same phase.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateSplit, InvalidConfig, NoEvents, SeriesTooShort, TooFewWindows
from .features import FeatureTable
from .graph_builder import build_snapshot
from .metrics import (THRESHOLD, metrics_report, pr_auc, pr_curve, roc_auc, roc_curve,
                      threshold_metrics)
from .model import VARIANT_LABELS, GraphBatch, LeadModel, ModelConfig, make_variant
from .nn_core import Adam, bce_with_logits
from .pv_sampling import (PVConfig, baseline_f1_evaluator, detect_peaks_valleys, grid_configs,
                          resample_pv, search_pv_config)
from .windowing import frame_duration

log = logging.getLogger(__name__)

__all__ = [
    "SplitIndices", "chronological_split", "EarlyStopper", "early_stopping_trace",
    "PreparedData", "prepare_data", "shuffle_label_blocks", "train", "evaluate",
    "run_single", "run_ablation", "select_pv_config", "pr_auc", "roc_auc",
    "threshold_metrics", "metrics_report", "THRESHOLD",
]

SPLIT_EPS = 1e-9


# ------------------------------------------------------------------ splitting

@dataclass(frozen=True)
class SplitIndices:
    train: range
    val: range
    test: range
    fractions: tuple = (0.6, 0.2, 0.2)

    def to_dict(self) -> dict:
        return {k: [getattr(self, k).start, getattr(self, k).stop] for k in ("train", "val", "test")}


def chronological_split(windows, fractions=(0.6, 0.2, 0.2)) -> SplitIndices:
    """Contiguous prefix/middle/suffix split of time-ordered windows.

    Boundaries are ``floor`` of the cumulative fractions, so a window sitting
    exactly on a boundary goes to the earlier split.
    """
    n = windows if isinstance(windows, (int, np.integer)) else len(windows)
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-6:
        raise InvalidConfig(f"split fractions must be three nonnegative numbers summing to 1, got {fr}")
    if any(f == 0 for f in fr):
        raise TooFewWindows(f"every split needs a positive fraction, got {fr}")
    if n < 5:
        raise TooFewWindows(f"need at least 5 windows, got {n}")
    a = math.floor(fr[0] * n + SPLIT_EPS)
    b = math.floor((fr[0] + fr[1]) * n + SPLIT_EPS)
    if a == 0 or b == a or b >= n:
        raise TooFewWindows(f"{n} windows leave an empty split under {fr}")
    return SplitIndices(range(0, a), range(a, b), range(b, n), fr)


# ------------------------------------------------------------- early stopping

class EarlyStopper:
    """Tracks the best score; ``stop`` turns true after ``patience`` epochs
    without a strict improvement. Epochs are numbered from 1."""

    def __init__(self, patience: int = 5):
        if patience < 1:
            raise InvalidConfig("patience must be >= 1")
        self.patience = patience
        self.best_score = -np.inf
        self.best_loss = np.inf
        self.best_epoch = 0
        self.epoch = 0

    def update(self, score: float, loss: float | None = None) -> bool:
        """A strictly higher score improves; an equal score improves only
        with a strictly lower ``loss`` (if given)."""
        self.epoch += 1
        loss = np.inf if loss is None else loss
        if score > self.best_score or (score == self.best_score and loss < self.best_loss):
            self.best_score, self.best_loss, self.best_epoch = score, loss, self.epoch
            return True
        return False

    @property
    def stop(self) -> bool:
        return self.epoch - self.best_epoch >= self.patience


def early_stopping_trace(trace: Sequence[float], patience: int):
    """Replay a validation trace; returns ``(best_epoch, stopped_after_epoch)``."""
    es = EarlyStopper(patience)
    for score in trace:
        es.update(score)
        if es.stop:
            break
    return es.best_epoch, es.epoch


# ----------------------------------------------------------------------- data

class PreparedData:
    """Feature table plus split bookkeeping and a lazy snapshot cache.

    Chronological windows are ``t = 0 .. T-h-1`` (start row ``t*L``); the
    split is over those. The last ``h`` windows of train and of validation
    are purged so no training or validation target lies in a later split.
    """

    def __init__(self, table: FeatureTable, L: int, h: int, fractions=(0.6, 0.2, 0.2)):
        self.table, self.L, self.h = table, int(L), int(h)
        T = len(table) // self.L
        self.n_windows = T - self.h
        self.split = chronological_split(self.n_windows, fractions)
        label = np.asarray(table.label, dtype=np.int64)
        self._label_cum = np.r_[0, np.cumsum(label)]
        self.duration = frame_duration(table.timestamp, self.L)
        self._snaps: dict = {}

    def __getstate__(self):
        # snapshots are a cache; worker processes rebuild what they need
        state = dict(self.__dict__)
        state["_snaps"] = {}
        return state

    # window starts per split, already purged
    def starts(self, name: str) -> np.ndarray:
        r = getattr(self.split, name)
        stop = r.stop if name == "test" else max(r.start, r.stop - self.h)
        return np.arange(r.start, stop, dtype=np.int64) * self.L

    @property
    def train_rows(self) -> int:
        """Rows whose labels training may see: targets stay below this row."""
        return self.split.train.stop * self.L

    def targets(self, starts) -> np.ndarray:
        s = np.asarray(starts, dtype=np.int64) + self.h * self.L
        return (self._label_cum[s + self.L] - self._label_cum[s] > 0).astype(np.int64)

    def snapshot(self, start: int):
        snap = self._snaps.get(start)
        if snap is None:
            snap = build_snapshot(self.table.slice(start, start + self.L))
            self._snaps[start] = snap
        return snap

    def context(self, start: int, chunk: int) -> np.ndarray:
        ks = start - self.L * np.arange(chunk - 1, -1, -1, dtype=np.int64)
        return ks[ks >= 0]

    def times(self, starts):
        """``(t_alert, t_event)`` per window start."""
        ts = self.table.timestamp
        t_event = ts[np.asarray(starts, dtype=np.int64) + self.h * self.L].astype(np.int64)
        return t_event - self.h * self.duration, t_event


def prepare_data(table: FeatureTable, L: int = 30, h: int = 5, fractions=(0.6, 0.2, 0.2)) -> PreparedData:
    return PreparedData(table, L, h, fractions)


def shuffle_label_blocks(table: FeatureTable, L: int, seed: int = 0) -> FeatureTable:
    """Permute whole ``L``-row label blocks: keeps frame-level prevalence,
    destroys any link between features and targets (negative control)."""
    T = len(table) // L
    rng = np.random.default_rng(seed)
    label = np.array(table.label, copy=True)
    blocks = label[:T * L].reshape(T, L)
    label[:T * L] = blocks[rng.permutation(T)].ravel()
    return FeatureTable(table.columns, table.usd_value, label, table.code_maps)


@dataclass
class SequenceBatch:
    graphs: GraphBatch
    seq_index: np.ndarray     # (B, T) frame positions in ``graphs``; -1 pads
    targets: np.ndarray       # (B, T)
    mask: np.ndarray          # (B, T) 1 where the step carries a loss / score
    starts: np.ndarray        # (B,) start row of each sequence's last frame

    @property
    def last_index(self) -> np.ndarray:
        return (self.seq_index >= 0).sum(axis=1) - 1


def make_batch(data: PreparedData, contexts: Sequence[np.ndarray], last_only: bool) -> SequenceBatch:
    uniq = np.unique(np.concatenate(contexts))
    graphs = GraphBatch.from_snapshots([data.snapshot(int(s)) for s in uniq])
    B, T = len(contexts), max(len(c) for c in contexts)
    seq = np.full((B, T), -1, dtype=np.int64)
    tgt = np.zeros((B, T))
    mask = np.zeros((B, T))
    for i, c in enumerate(contexts):
        seq[i, :len(c)] = np.searchsorted(uniq, c)
        tgt[i, :len(c)] = data.targets(c)
        if last_only:
            mask[i, len(c) - 1] = 1.0
        else:
            mask[i, :len(c)] = 1.0
    return SequenceBatch(graphs, seq, tgt, mask, np.array([c[-1] for c in contexts]))


def context_length(cfg: ModelConfig) -> int:
    # without the recurrent encoder a score depends on its own frame only
    return cfg.chunk if cfg.variant.use_lstm else 1


def _training_contexts(data: PreparedData, cfg: ModelConfig, seed: int):
    """Contexts and whether only their last step is supervised."""
    if cfg.variant.use_pv and cfg.pv is not None:
        usable = data.train_rows - data.h * data.L
        try:
            events = detect_peaks_valleys(data.table.usd_value[:usable], cfg.pv)
            starts = resample_pv(usable, events, data.L, cfg.pv.neg_ratio, seed)
            return [data.context(s, context_length(cfg)) for s in starts], True
        except (NoEvents, SeriesTooShort):
            log.warning("no peak/valley events; training on chronological windows")
    starts = data.starts("train")
    chunks = [starts[i:i + cfg.chunk] for i in range(0, len(starts), cfg.chunk)]
    return chunks, False


def _scaler_inputs(data: PreparedData) -> np.ndarray:
    starts = np.arange(data.split.train.stop) * data.L
    return np.vstack([data.snapshot(int(s)).model_inputs() for s in starts])


def _eval_batches(data: PreparedData, split: str, chunk: int, size: int = 256):
    starts = data.starts(split)
    out = []
    for i in range(0, len(starts), size):
        out.append(make_batch(data, [data.context(int(s), chunk) for s in starts[i:i + size]], True))
    return out


def predict(model: LeadModel, batches: Sequence[SequenceBatch]):
    scores, targets, starts = [], [], []
    for b in batches:
        scores.append(model.score(b.graphs, b.seq_index, b.last_index))
        targets.append(b.targets[np.arange(len(b.starts)), b.last_index])
        starts.append(b.starts)
    return np.concatenate(scores), np.concatenate(targets).astype(np.int64), np.concatenate(starts)


def _logit(p):
    p = np.clip(p, 1e-12, 1 - 1e-12)
    return np.log(p) - np.log1p(-p)


def _val_criterion(scores, targets) -> float:
    if targets.max() == 0:
        warnings.warn("validation split has no positive targets; early stopping on -BCE",
                      DegenerateSplit, stacklevel=3)
        p = np.clip(scores, 1e-7, 1 - 1e-7)
        return float(np.mean(np.log(1 - p)))
    return pr_auc(scores, targets)


# ------------------------------------------------------------------- training

@dataclass
class TrainResult:
    model: LeadModel
    log: list
    best_epoch: int
    stopped_epoch: int
    best_val: float

    def checkpoint(self) -> dict:
        state = self.model.state()
        state.update(best_epoch=self.best_epoch, best_val_pr_auc=self.best_val,
                     config=self.model.cfg.to_dict())
        return state


def train(cfg: ModelConfig, data: PreparedData, patience: int = 5, max_epochs: int = 100,
          val_batches=None, on_epoch: Callable | None = None) -> TrainResult:
    """Adam on mean BCE; keeps the parameters of the best validation epoch."""
    if data.L != cfg.L or data.h != cfg.h:
        raise InvalidConfig(f"data prepared for L={data.L}, h={data.h} but model wants L={cfg.L}, h={cfg.h}")
    rng = np.random.default_rng(cfg.seed)
    model = LeadModel(cfg, input_dim=data.snapshot(0).model_inputs().shape[1])
    model.scaler.fit(_scaler_inputs(data))
    opt = Adam(model.parameters(), lr=cfg.lr)
    contexts, last_only = _training_contexts(data, cfg, cfg.seed)
    per_item = 1 if last_only else cfg.chunk
    items_per_batch = max(1, cfg.batch_targets // per_item)
    if val_batches is None:
        val_batches = _eval_batches(data, "val", context_length(cfg))

    stopper = EarlyStopper(patience)
    best_values = model.snapshot_values()
    history = []
    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(len(contexts))
        total, count = 0.0, 0
        for i in range(0, len(order), items_per_batch):
            batch = make_batch(data, [contexts[j] for j in order[i:i + items_per_batch]], last_only)
            model.zero_grad()
            _, logit, cache = model.forward(batch.graphs, batch.seq_index)
            loss, dlogit = bce_with_logits(logit, batch.targets)
            n = batch.mask.sum()
            total += float((loss * batch.mask).sum())
            count += int(n)
            model.backward(dlogit * batch.mask / n, cache)
            opt.step()
        scores, targets, _ = predict(model, val_batches)
        val = _val_criterion(scores, targets)
        val_loss = float(np.mean(bce_with_logits(_logit(scores), targets)[0]))
        improved = stopper.update(val, val_loss)
        if improved:
            best_values = model.snapshot_values()
        entry = {"epoch": epoch, "train_loss": total / max(count, 1), "val_pr_auc": val,
                 "val_loss": val_loss}
        history.append(entry)
        log.info("epoch %d loss %.5f val_pr_auc %.5f", epoch, entry["train_loss"], val)
        if on_epoch is not None:
            on_epoch(entry)
        if stopper.stop:
            break
    model.restore_values(best_values)
    return TrainResult(model, history, stopper.best_epoch, stopper.epoch, stopper.best_score)


def evaluate(model: LeadModel, data: PreparedData, split: str = "test", batches=None) -> dict:
    """Metrics report plus per-window scores for one split."""
    if batches is None:
        batches = _eval_batches(data, split, context_length(model.cfg))
    scores, targets, starts = predict(model, batches)
    if targets.max() == 0:
        warnings.warn(f"{split} split has no positive targets", DegenerateSplit, stacklevel=2)
    t_alert, t_event = data.times(starts)
    return {
        "metrics": metrics_report(scores, targets),
        "frame_index": (starts // data.L).tolist(),
        "t_alert": t_alert.tolist(),
        "t_event": t_event.tolist(),
        "score": scores.tolist(),
        "target": targets.tolist(),
    }


def select_pv_config(data: PreparedData, grid=None, seed: int = 0, neg_ratio: float = 1.0):
    """PV hyperparameters by validation F1 of the logistic baseline."""
    tab = data.table
    train_tab = tab.slice(0, data.train_rows)
    val_tab = tab.slice(data.train_rows, data.split.val.stop * data.L + data.h * data.L)
    evaluate_cfg = baseline_f1_evaluator(train_tab, val_tab, data.L, data.h, seed)
    return search_pv_config(train_tab, grid_configs(grid, neg_ratio), evaluate_cfg)


def run_single(cfg: ModelConfig, data: PreparedData, patience: int = 5, max_epochs: int = 100,
               eval_cache: dict | None = None) -> dict:
    eval_cache = {} if eval_cache is None else eval_cache
    n_ctx = context_length(cfg)
    for split in ("val", "test"):
        if (split, n_ctx) not in eval_cache:
            eval_cache[split, n_ctx] = _eval_batches(data, split, n_ctx)
    result = train(cfg, data, patience, max_epochs, val_batches=eval_cache["val", n_ctx])
    report = evaluate(result.model, data, "test", batches=eval_cache["test", n_ctx])
    return {
        "variant": cfg.variant.name,
        "seed": cfg.seed,
        "metrics": report["metrics"],
        "best_epoch": result.best_epoch,
        "epochs_run": result.stopped_epoch,
        "best_val_pr_auc": result.best_val,
        "_result": result,
        "_report": report,
    }


def _strip(r: dict) -> dict:
    return {k: v for k, v in r.items() if not k.startswith("_")}


_WORKER: dict = {}


def _init_worker(data, patience, max_epochs):
    _WORKER.update(data=data, patience=patience, max_epochs=max_epochs, cache={})


def _worker_job(cfg):
    w = _WORKER
    return _strip(run_single(cfg, w["data"], w["patience"], w["max_epochs"], w["cache"]))


@dataclass
class AblationResult:
    runs: list
    table: list
    config: dict
    pv: dict | None = None
    pv_search: list = field(default_factory=list)

    def to_json(self) -> str:
        runs = [_strip(r) for r in self.runs]
        return json.dumps({"config": self.config, "pv": self.pv, "pv_search": self.pv_search,
                           "runs": runs, "aggregate": self.table}, sort_keys=True, indent=1)


def aggregate(runs: Sequence[dict], variants: Sequence[str], metric: str = "pr_auc") -> list:
    """Per-variant mean and sample std of every metric, and PR-AUC delta vs full."""
    keys = ("accuracy", "precision", "recall", "f1", "roc_auc", "pr_auc")
    rows = []
    for v in variants:
        vals = {k: np.array([r["metrics"][k] for r in runs if r["variant"] == v
                             and r["metrics"][k] is not None], dtype=np.float64) for k in keys}
        row = {"variant": v, "label": VARIANT_LABELS.get(v, v),
               "n_seeds": int(sum(r["variant"] == v for r in runs))}
        for k in keys:
            x = vals[k]
            row[f"{k}_mean"] = float(x.mean()) if len(x) else None
            row[f"{k}_std"] = float(x.std(ddof=1)) if len(x) > 1 else 0.0
        rows.append(row)
    full = next((r for r in rows if r["variant"] == "full"), None)
    for row in rows:
        if full is None or row[f"{metric}_mean"] is None:
            row["delta_vs_full"] = None
        else:
            row["delta_vs_full"] = row[f"{metric}_mean"] - full[f"{metric}_mean"]
    return rows


def run_ablation(data: PreparedData, seeds: Sequence[int], variants: Sequence[str],
                 base_cfg: ModelConfig | None = None, patience: int = 5, max_epochs: int = 100,
                 pv_grid=None, progress: Callable | None = None, workers: int = 1) -> AblationResult:
    """Every variant on every seed, on identical splits."""
    if len(seeds) < 2:
        raise InvalidConfig("ablation needs at least two seeds")
    base_cfg = base_cfg or ModelConfig(L=data.L, h=data.h)
    for v in variants:
        make_variant(v)
    pv_log = []
    if base_cfg.pv is None and any(make_variant(v).use_pv for v in variants):
        pv_cfg, _, pv_log = select_pv_config(data, pv_grid)
        base_cfg = replace(base_cfg, pv=pv_cfg)
    jobs = [replace(base_cfg, seed=int(seed), variant=make_variant(v)) for seed in seeds for v in variants]
    runs = []
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(data, patience, max_epochs)) as pool:
            # map preserves job order, so the report does not depend on scheduling
            for r in pool.map(_worker_job, jobs):
                runs.append(r)
                if progress is not None:
                    progress(r)
    else:
        eval_cache: dict = {}
        for cfg in jobs:
            r = _strip(run_single(cfg, data, patience, max_epochs, eval_cache))
            runs.append(r)
            if progress is not None:
                progress(r)
    cfg_dict = base_cfg.to_dict()
    cfg_dict.pop("seed")
    cfg_dict.pop("variant")
    return AblationResult(runs, aggregate(runs, variants), cfg_dict,
                          None if base_cfg.pv is None else base_cfg.pv.__dict__.copy(), pv_log)


# -------------------------------------------------------------------- exports

COMPARISON_COLUMNS = ("model", "accuracy", "precision", "recall", "f1", "roc_auc", "pr_auc")
ABLATION_COLUMNS = ("model_setting", "pr_auc", "delta_vs_full")


def _pm(row, k):
    m = row[f"{k}_mean"]
    return "" if m is None else f"{m:.4f} ± {row[f'{k}_std']:.4f}"


def write_table_ii(rows, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARISON_COLUMNS)
        for row in rows:
            w.writerow([row["label"]] + [_pm(row, k) for k in COMPARISON_COLUMNS[1:]])


def write_table_iii(rows, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ABLATION_COLUMNS)
        for row in rows:
            d = row["delta_vs_full"]
            w.writerow([row["label"], _pm(row, "pr_auc"), "" if d is None else f"{d:+.4f}"])


def write_scores(report: dict, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("frame_index", "t_alert", "t_event", "score", "target"))
        for row in zip(report["frame_index"], report["t_alert"], report["t_event"],
                       report["score"], report["target"]):
            w.writerow([row[0], row[1], row[2], repr(float(row[3])), row[4]])


def write_curves(scores, targets, pr_path, roc_path) -> None:
    precision, recall, thr = pr_curve(scores, targets)
    with Path(pr_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("threshold", "recall", "precision"))
        w.writerows(zip(thr, recall, precision))
    fpr, tpr, thr = roc_curve(scores, targets)
    with Path(roc_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("threshold", "fpr", "tpr"))
        w.writerows(zip(thr, fpr, tpr))
