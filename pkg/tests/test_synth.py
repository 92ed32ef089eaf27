import numpy as np
import pytest

from leadwarn.errors import InvalidConfig, TooFewRows
from leadwarn.ingest import TransactionLog
from leadwarn.synth import SynthConfig, degree_tail_check, generate_stream


@pytest.fixture(scope="module")
def default_stream():
    return generate_stream(SynthConfig())


def test_prevalence(default_stream):
    labels = default_stream.column("label")
    assert len(labels) == 20000
    assert 0.045 <= labels.mean() <= 0.055


def test_deterministic():
    cfg = SynthConfig(n_rows=2000, n_addresses=200, seed=11)
    assert generate_stream(cfg).records == generate_stream(cfg).records
    assert generate_stream(cfg).records != generate_stream(SynthConfig(n_rows=2000, n_addresses=200)).records


def test_rejects_bad_config():
    with pytest.raises(InvalidConfig):
        SynthConfig(anomaly_prevalence=0)
    with pytest.raises(InvalidConfig):
        SynthConfig.from_dict({"n_rows": 10, "bogus": 1})
    with pytest.raises(InvalidConfig):
        generate_stream(SynthConfig(n_rows=1000, anomaly_prevalence=0.3))


def test_degree_tail(default_stream):
    slope = degree_tail_check(default_stream)
    assert -1.6 <= slope <= -0.9
    assert slope == degree_tail_check(default_stream)
    uniform = generate_stream(SynthConfig(uniform_addresses=True))
    assert degree_tail_check(uniform) > -0.3
    with pytest.raises(TooFewRows):
        degree_tail_check(TransactionLog(default_stream.records[:999]))


def test_stream_shape(default_stream):
    ts = default_stream.column("timestamp")
    assert np.all(np.diff(ts) >= 0)
    labels = default_stream.column("label")
    # bursts are contiguous runs, each preceded by an unlabelled lead
    starts = np.flatnonzero(np.diff(np.r_[0, labels]) == 1)
    assert np.all(starts >= 150)
    burst_rows = [r for r in default_stream.records if r.label == 1]
    assert all(r.recv_addr.startswith("mix") or r.counterparty_addr.startswith("mix") for r in burst_rows)
    usd = np.array([r.usd_value for r in burst_rows])
    assert np.allclose(usd, 6000.0, rtol=0.02)


def test_precursor_toggle():
    cfg = SynthConfig(n_rows=5000, n_addresses=500, precursor=False)
    log = generate_stream(cfg)
    unlabelled_mix = [r for r in log.records if r.label == 0 and r.recv_addr.startswith("mix")]
    assert unlabelled_mix == []
    log = generate_stream(SynthConfig(n_rows=5000, n_addresses=500))
    assert any(r.label == 0 and r.recv_addr.startswith("mix") for r in log.records)
