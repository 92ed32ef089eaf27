"""Causal per-transaction feature engineering.

Every statistic at row ``i`` is computed from rows ``0..i`` only, so a
prefix of the log always yields the same prefix of features.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EmptyLog
from .ingest import TransactionLog

ROLL_WINDOW = 5

# Exported numeric columns, in this fixed order (feature_dim = 18).
FEATURE_COLUMNS = (
    "delta_t", "usd_change", "usd_roll_mean", "usd_roll_std",
    "recv_freq", "send_freq", "log_usd", "usd_rel_day", "usd_dev_addr",
    "value_zscore",
    "year", "month", "day", "dayofweek", "hour", "timestamp",
    "recv_code", "cp_code",
)

# Behavioural subset fed to the graph model; identifiers and absolute
# calendar position are excluded because they do not transfer across time.
MODEL_FEATURES = FEATURE_COLUMNS[:10]


@dataclass(frozen=True)
class FeatureRow:
    timestamp: int
    delta_t: float
    usd_change: float
    usd_roll_mean: float
    usd_roll_std: float
    recv_freq: int
    send_freq: int
    log_usd: float
    usd_rel_day: float
    usd_dev_addr: float
    value_zscore: float
    calendar: tuple
    recv_code: int
    cp_code: int
    label: int


class FeatureTable:
    """Columnar store of engineered features, one row per transaction.

    ``usd_value`` and ``label`` ride along because the graph builder and the
    labelling step need the raw amount and the ground truth.
    """

    def __init__(self, columns: Mapping[str, np.ndarray], usd_value: np.ndarray,
                 label: np.ndarray, code_maps: Mapping[str, dict] | None = None):
        n = len(label)
        for name in FEATURE_COLUMNS:
            if len(columns[name]) != n:
                raise ValueError(f"column {name} has wrong length")
        self.columns = {k: np.asarray(columns[k]) for k in FEATURE_COLUMNS}
        self.usd_value = np.asarray(usd_value, dtype=np.float64)
        self.label = np.asarray(label, dtype=np.int64)
        self.code_maps = dict(code_maps or {})

    feature_dim = len(FEATURE_COLUMNS)

    def __len__(self):
        return len(self.label)

    @property
    def timestamp(self) -> np.ndarray:
        return self.columns["timestamp"]

    def matrix(self, names: Sequence[str] = FEATURE_COLUMNS) -> np.ndarray:
        return np.column_stack([self.columns[k].astype(np.float64) for k in names])

    def slice(self, start: int, stop: int) -> "FeatureTable":
        return FeatureTable({k: v[start:stop] for k, v in self.columns.items()},
                            self.usd_value[start:stop], self.label[start:stop],
                            self.code_maps)

    def row(self, i: int) -> FeatureRow:
        c = self.columns
        cal = tuple(int(c[k][i]) for k in ("year", "month", "day", "dayofweek", "hour", "timestamp"))
        return FeatureRow(
            int(c["timestamp"][i]), float(c["delta_t"][i]), float(c["usd_change"][i]),
            float(c["usd_roll_mean"][i]), float(c["usd_roll_std"][i]),
            int(c["recv_freq"][i]), int(c["send_freq"][i]), float(c["log_usd"][i]),
            float(c["usd_rel_day"][i]), float(c["usd_dev_addr"][i]),
            float(c["value_zscore"][i]), cal, int(c["recv_code"][i]),
            int(c["cp_code"][i]), int(self.label[i]))

    @property
    def rows(self) -> list[FeatureRow]:
        return [self.row(i) for i in range(len(self))]

    def to_csv(self, path) -> None:
        mat = [self.columns[k] for k in FEATURE_COLUMNS]
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(list(FEATURE_COLUMNS) + ["usd_value", "label"])
            for i in range(len(self)):
                writer.writerow([repr(m[i].item()) for m in mat]
                                + [repr(float(self.usd_value[i])), int(self.label[i])])

    def save_code_maps(self, path) -> None:
        Path(path).write_text(json.dumps(self.code_maps, indent=2, sort_keys=True))


def encode_categorical(values: Sequence[str], code_map: dict | None = None):
    """Label-encode by first appearance; returns ``(codes, code_map)``.

    A persisted ``code_map`` is extended in place with unseen values, which
    receive the next free integer.
    """
    mapping = {} if code_map is None else code_map
    next_code = max(mapping.values(), default=-1) + 1
    codes = []
    for v in values:
        if v not in mapping:
            mapping[v] = next_code
            next_code += 1
        codes.append(mapping[v])
    return codes, mapping


def trailing_stats(series, window: int = ROLL_WINDOW):
    """Trailing mean and population std over ``series[max(0, i-window+1):i+1]``."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        return np.zeros(0), np.zeros(0)
    padded = np.concatenate([np.full(window - 1, np.nan), x])
    win = sliding_window_view(padded, window)
    count = np.sum(~np.isnan(win), axis=1)
    total = np.nansum(win, axis=1)
    means = total / count
    stds = np.sqrt(np.nansum((win - means[:, None]) ** 2, axis=1) / count)
    # a constant slice has exactly zero spread; rounding in the mean must not leak in
    flat = np.nanmax(win, axis=1) == np.nanmin(win, axis=1)
    stds[flat] = 0.0
    return means, stds


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den
    out[~np.isfinite(out)] = 0.0
    return out


def engineer_features(log: TransactionLog, code_maps: dict | None = None) -> FeatureTable:
    if len(log) == 0:
        raise EmptyLog("cannot engineer features for an empty log")
    ts = log.column("timestamp")
    usd = log.column("usd_value")
    recv = log.column("recv_addr")
    cp = log.column("counterparty_addr")
    n = len(ts)

    delta_t = np.zeros(n)
    delta_t[1:] = np.diff(ts)
    usd_change = np.zeros(n)
    usd_change[1:] = _safe_ratio(usd[1:] - usd[:-1], usd[:-1])
    roll_mean, roll_std = trailing_stats(usd, ROLL_WINDOW)

    days = ts // 86400
    recv_freq = np.zeros(n, dtype=np.int64)
    send_freq = np.zeros(n, dtype=np.int64)
    rel_day = np.zeros(n)
    dev_addr = np.zeros(n)
    zscore = np.zeros(n)
    recv_count: dict = {}
    send_count: dict = {}
    addr_mean: dict = {}
    addr_m2: dict = {}
    day_key, day_sum, day_n = None, 0.0, 0
    for i in range(n):
        r, c, u = recv[i], cp[i], usd[i]
        recv_count[r] = recv_count.get(r, 0) + 1
        send_count[c] = send_count.get(c, 0) + 1
        recv_freq[i] = recv_count[r]
        send_freq[i] = send_count[c]

        if days[i] != day_key:
            day_key, day_sum, day_n = days[i], 0.0, 0
        day_sum += u
        day_n += 1
        day_mean = day_sum / day_n
        rel_day[i] = u / day_mean if day_mean > 0 else 0.0

        # per receiving-address trailing moments (Welford), current row included
        k = recv_count[r]
        prev = addr_mean.get(r, 0.0)
        mean = prev + (u - prev) / k
        m2 = addr_m2.get(r, 0.0) + (u - prev) * (u - mean)
        addr_mean[r], addr_m2[r] = mean, m2
        std = np.sqrt(m2 / k)
        dev_addr[i] = u - mean
        zscore[i] = (u - mean) / std if std > 0 else 0.0

    cal = np.array([_calendar(t) for t in ts], dtype=np.int64).reshape(n, 5)
    # both roles share one address code space so graph nodes line up;
    # interleaving keeps first-appearance order row by row
    maps = {} if code_maps is None else dict(code_maps)
    interleaved = np.empty(2 * n, dtype=object)
    interleaved[0::2], interleaved[1::2] = recv, cp
    codes, maps["address"] = encode_categorical(interleaved, maps.get("address"))
    recv_codes, cp_codes = codes[0::2], codes[1::2]

    columns = {
        "delta_t": delta_t, "usd_change": usd_change,
        "usd_roll_mean": roll_mean, "usd_roll_std": roll_std,
        "recv_freq": recv_freq, "send_freq": send_freq,
        "log_usd": np.log1p(usd), "usd_rel_day": rel_day,
        "usd_dev_addr": dev_addr, "value_zscore": zscore,
        "year": cal[:, 0], "month": cal[:, 1], "day": cal[:, 2],
        "dayofweek": cal[:, 3], "hour": cal[:, 4], "timestamp": ts,
        "recv_code": np.asarray(recv_codes, dtype=np.int64),
        "cp_code": np.asarray(cp_codes, dtype=np.int64),
    }
    for k in FEATURE_COLUMNS[:10]:
        col = columns[k]
        if col.dtype.kind == "f":
            col[~np.isfinite(col)] = 0.0
    return FeatureTable(columns, usd, log.column("label"), maps)


def _calendar(ts: int):
    dt = datetime.fromtimestamp(int(ts), tz=timezone.utc)
    return dt.year, dt.month, dt.day, dt.weekday(), dt.hour
