"""Synthetic labelled transaction streams with planted mixing bursts.

Background traffic draws both addresses from a Zipf popularity law, amounts
from a log-normal and inter-arrival gaps from an exponential. An anomaly is
a contiguous burst in which one fresh address first collects near-uniform
denominations from many fresh senders and then pays them out, at compressed
gaps. The ``precursor_lead_rows`` rows before each burst run faster by
``precursor_rate_boost``, and at the start of that ramp the burst's
coordinator address already collects a few probe deposits.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import InvalidConfig, TooFewRows
from .ingest import TransactionLog, TransactionRecord

START_TS = 1704067200  # 2024-01-01T00:00:00Z


@dataclass(frozen=True)
class SynthConfig:
    n_rows: int = 20000
    n_addresses: int = 2000
    anomaly_prevalence: float = 0.05
    burst_length_mean: float = 20.0
    hub_fraction: float = 0.02
    seed: int = 0
    amount_log_mean: float = 6.5
    amount_log_sigma: float = 1.5
    hub_amount_log_boost: float = 3.0
    hub_amount_log_sigma: float = 2.0
    mean_gap_seconds: float = 60.0
    zipf_exponent: float = 1.2
    uniform_addresses: bool = False
    burst_rate_factor: float = 3.0
    denomination_btc: float = 0.1
    btc_price: float = 60000.0
    precursor: bool = True
    precursor_lead_rows: int = 150
    precursor_strength: float = 0.5
    precursor_rate_boost: float = 0.2

    def __post_init__(self):
        problems = []
        if not 0 < self.anomaly_prevalence < 0.5:
            problems.append("anomaly_prevalence must lie in (0, 0.5)")
        if self.n_rows < 1 or self.n_addresses < 2:
            problems.append("n_rows and n_addresses must be positive")
        for name in ("burst_length_mean", "mean_gap_seconds", "burst_rate_factor",
                     "btc_price", "denomination_btc", "amount_log_sigma", "hub_amount_log_sigma",
                     "zipf_exponent"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        if not 0 <= self.hub_fraction < 1 or not 0 <= self.precursor_strength <= 1:
            problems.append("hub_fraction and precursor_strength must be fractions")
        if self.precursor_rate_boost < 0 or self.precursor_lead_rows < 0:
            problems.append("precursor settings must be nonnegative")
        if problems:
            raise InvalidConfig("; ".join(problems))

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown synth keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def _burst_layout(cfg: SynthConfig, rng: np.random.Generator):
    """Non-overlapping (start, length) bursts whose lengths sum to the target."""
    target = int(round(cfg.anomaly_prevalence * cfg.n_rows))
    k = max(1, int(round(target / cfg.burst_length_mean)))
    lengths = np.maximum(rng.poisson(cfg.burst_length_mean, size=k), 4)
    # nudge lengths one row at a time until they sum to the target exactly
    diff = target - int(lengths.sum())
    while diff != 0:
        j = int(rng.integers(k))
        step = 1 if diff > 0 else -1
        if lengths[j] + step >= 4:
            lengths[j] += step
            diff -= step
    lead = cfg.precursor_lead_rows if cfg.precursor else 0
    min_gap = lead + int(lengths.max()) + 1
    free = cfg.n_rows - int(lengths.sum()) - min_gap * k
    if free < 0:
        raise InvalidConfig("too many bursts for n_rows with this precursor lead")
    extra = rng.multinomial(free, np.full(k + 1, 1.0 / (k + 1)))
    starts, pos = [], 0
    for j in range(k):
        pos += min_gap + int(extra[j])
        starts.append(pos)
        pos += int(lengths[j])
    return list(zip(starts, lengths.tolist()))


def generate_stream(cfg: SynthConfig) -> TransactionLog:
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_rows
    if cfg.uniform_addresses:
        pop = np.ones(cfg.n_addresses)
    else:
        pop = np.arange(1, cfg.n_addresses + 1, dtype=np.float64) ** -cfg.zipf_exponent
    pop /= pop.sum()
    n_hubs = max(1, int(cfg.hub_fraction * cfg.n_addresses))

    kind = np.zeros(n, dtype=np.int64)          # 0 background, 1 burst, 2 probe, 3 ramp
    owner = np.full(n, -1, dtype=np.int64)      # burst id for bursts and probes
    phase = np.zeros(n)                         # position within burst, in [0, 1)
    bursts = _burst_layout(cfg, rng)
    for b, (s, length) in enumerate(bursts):
        kind[s:s + length] = 1
        owner[s:s + length] = b
        phase[s:s + length] = np.arange(length) / length
        if cfg.precursor and cfg.precursor_lead_rows > 0:
            # rate ramp over the lead rows; the coordinator probes at its onset
            p0 = max(s - cfg.precursor_lead_rows, 0)
            ramp = np.arange(p0, s)
            ramp = ramp[kind[ramp] == 0]
            kind[ramp] = 3
            onset = ramp[ramp < p0 + length]
            probe = onset[rng.random(len(onset)) < cfg.precursor_strength]
            kind[probe] = 2
            owner[probe] = b

    rate_scale = np.ones(n)
    rate_scale[kind == 1] = cfg.burst_rate_factor
    rate_scale[(kind == 2) | (kind == 3)] = 1.0 + cfg.precursor_rate_boost
    gaps = rng.exponential(cfg.mean_gap_seconds, size=n) / rate_scale
    ts = START_TS + np.floor(np.cumsum(gaps)).astype(np.int64)

    recv_idx = rng.choice(cfg.n_addresses, size=n, p=pop)
    cp_idx = rng.choice(cfg.n_addresses, size=n, p=pop)
    usd = np.exp(rng.normal(cfg.amount_log_mean, cfg.amount_log_sigma, size=n))
    hub_row = (recv_idx < n_hubs) & (cp_idx < n_hubs)
    # hub-to-hub transfers: larger and more dispersed, still log-normal
    z = (np.log(usd[hub_row]) - cfg.amount_log_mean) / cfg.amount_log_sigma
    usd[hub_row] = np.exp(cfg.amount_log_mean + cfg.hub_amount_log_boost + cfg.hub_amount_log_sigma * z)
    denom = cfg.denomination_btc * cfg.btc_price
    jitter = 1.0 + 0.002 * rng.standard_normal(n)

    records = []
    for i in range(n):
        k = kind[i]
        recv = f"addr{recv_idx[i]:05d}"
        cp = f"addr{cp_idx[i]:05d}"
        value = float(usd[i])
        if k in (1, 2):
            mixer = f"mix{owner[i]:04d}"
            peer = f"mix{owner[i]:04d}_{i:06d}"
            value = float(denom * jitter[i])
            if k == 2 or phase[i] < 0.5:
                recv, cp = mixer, peer      # fan-in
            else:
                recv, cp = peer, mixer      # fan-out
        records.append(TransactionRecord(
            int(ts[i]), recv, cp, f"tx{cfg.seed:04d}{i:08d}",
            value / cfg.btc_price, value, int(k == 1)))
    return TransactionLog(tuple(records), source_id=f"synth-seed{cfg.seed}")


def degree_tail_check(log: TransactionLog) -> float:
    """Least-squares slope of log(degree) against log(rank) over the top decile."""
    if len(log) < 1000:
        raise TooFewRows("degree tail estimate needs at least 1000 rows")
    counts: dict = {}
    for r in log.records:
        counts[r.recv_addr] = counts.get(r.recv_addr, 0) + 1
        if r.counterparty_addr != r.recv_addr:
            counts[r.counterparty_addr] = counts.get(r.counterparty_addr, 0) + 1
    deg = np.sort(np.fromiter(counts.values(), dtype=np.float64))[::-1]
    top = max(2, int(np.ceil(0.1 * len(deg))))
    rank = np.arange(1, top + 1, dtype=np.float64)
    slope, _ = np.polyfit(np.log(rank), np.log(deg[:top]), 1)
    return float(slope)
