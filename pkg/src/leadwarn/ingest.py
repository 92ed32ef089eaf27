"""Parse and chronologically order labeled transaction CSV files."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyAfterFiltering, MalformedNumeric, MissingColumn

DEFAULT_SCHEMA = {
    "timestamp": "Date",
    "recv_addr": "Receiving Address",
    "counterparty_addr": "Counterparty Address",
    "tx_hash": "Transaction Hash",
    "btc_value": "Value",
    "usd_value": "USD Value",
    "label": "Label",
}


@dataclass(frozen=True)
class TransactionRecord:
    timestamp: int
    recv_addr: str
    counterparty_addr: str
    tx_hash: str
    btc_value: float
    usd_value: float
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if not (self.btc_value >= 0 and self.usd_value >= 0):
            raise ValueError("amounts must be nonnegative")


@dataclass(frozen=True)
class LoadSummary:
    rows_total: int
    rows_kept: int
    rows_dropped: int
    rows_malformed: int = 0

    def to_json(self) -> str:
        return json.dumps({"rows_total": self.rows_total,
                           "rows_kept": self.rows_kept,
                           "rows_dropped": self.rows_dropped})


@dataclass(frozen=True)
class TransactionLog:
    """Timestamp-sorted, immutable sequence of records."""

    records: tuple
    source_id: str = ""
    summary: LoadSummary | None = field(default=None, compare=False)

    def __post_init__(self):
        ts = [r.timestamp for r in self.records]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("records must be sorted by timestamp")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name: str) -> np.ndarray:
        values = [getattr(r, name) for r in self.records]
        if name in ("recv_addr", "counterparty_addr", "tx_hash"):
            return np.array(values, dtype=object)
        dtype = np.int64 if name in ("timestamp", "label") else np.float64
        return np.array(values, dtype=dtype)

    @classmethod
    def from_records(cls, records: Sequence[TransactionRecord], source_id: str = ""):
        # sorted() is stable: equal timestamps keep input order
        return cls(tuple(sorted(records, key=lambda r: r.timestamp)), source_id)


def parse_timestamp(text: str) -> int | None:
    """Epoch seconds or ISO-8601 text -> UTC epoch seconds; None if unusable."""
    text = (text or "").strip()
    if not text:
        return None
    try:
        value = float(text)
    except ValueError:
        pass
    else:
        if not math.isfinite(value):
            return None
        return int(math.floor(value))
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(text)
    except ValueError:
        return None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(math.floor(dt.timestamp()))


def _parse_amount(text: str) -> float:
    value = float(text)
    if not math.isfinite(value) or value < 0:
        raise ValueError(text)
    return value


def _parse_label(text: str) -> int:
    value = float(text)
    if value not in (0.0, 1.0):
        raise ValueError(text)
    return int(value)


def parse_transactions(path, schema: Mapping[str, str] | None = None) -> TransactionLog:
    """Read a transaction CSV into a sorted :class:`TransactionLog`.

    Rows with a blank or unparseable timestamp are dropped; rows whose amount
    or label fields are not valid numbers are rejected. Both are counted in
    ``log.summary``. The rejection becomes fatal only when no row survives.
    """
    cols = dict(DEFAULT_SCHEMA)
    if schema:
        cols.update(schema)
    path = Path(path)
    records = []
    total = dropped = malformed = 0
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in cols.values() if c not in header]
        if missing:
            raise MissingColumn(f"missing column(s): {', '.join(missing)}")
        for row in reader:
            total += 1
            ts = parse_timestamp(row[cols["timestamp"]])
            if ts is None:
                dropped += 1
                continue
            try:
                btc = _parse_amount(row[cols["btc_value"]])
                usd = _parse_amount(row[cols["usd_value"]])
                label = _parse_label(row[cols["label"]])
            except (TypeError, ValueError):
                malformed += 1
                dropped += 1
                continue
            records.append(TransactionRecord(
                ts, row[cols["recv_addr"]], row[cols["counterparty_addr"]],
                row[cols["tx_hash"]], btc, usd, label))
    if not records:
        if malformed and malformed == total:
            raise MalformedNumeric(f"all {total} rows had malformed numeric fields")
        raise EmptyAfterFiltering(f"no valid rows in {path}")
    log = TransactionLog.from_records(records, source_id=str(path))
    summary = LoadSummary(total, len(records), dropped, malformed)
    return TransactionLog(log.records, log.source_id, summary)


def write_transactions(log: TransactionLog, path, schema: Mapping[str, str] | None = None) -> None:
    """Serialize with epoch-second dates; ``parse_transactions`` round-trips it."""
    cols = dict(DEFAULT_SCHEMA)
    if schema:
        cols.update(schema)
    order = ["timestamp", "recv_addr", "counterparty_addr", "tx_hash",
             "btc_value", "usd_value", "label"]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([cols[k] for k in order])
        for r in log.records:
            writer.writerow([r.timestamp, r.recv_addr, r.counterparty_addr, r.tx_hash,
                             repr(r.btc_value), repr(r.usd_value), r.label])


def derive_calendar_fields(r) -> tuple:
    """(year, month, day, dayofweek, hour, unix_seconds) in UTC, Monday = 0."""
    ts = r.timestamp if isinstance(r, TransactionRecord) else int(r)
    dt = datetime.fromtimestamp(ts, tz=timezone.utc)
    return (dt.year, dt.month, dt.day, dt.weekday(), dt.hour, ts)
