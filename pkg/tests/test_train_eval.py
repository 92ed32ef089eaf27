import json
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leadwarn.errors import DegenerateSplit, InvalidConfig, TooFewWindows
from leadwarn.features import engineer_features
from leadwarn.model import ModelConfig, make_variant
from leadwarn.synth import SynthConfig, generate_stream
from leadwarn.train_eval import (EarlyStopper, aggregate, chronological_split, early_stopping_trace,
                                 evaluate, prepare_data, run_ablation, shuffle_label_blocks, train,
                                 write_scores, write_table_iii)


def test_split_examples():
    s = chronological_split(10, (0.6, 0.2, 0.2))
    assert (list(s.train), list(s.val), list(s.test)) == ([0, 1, 2, 3, 4, 5], [6, 7], [8, 9])
    s = chronological_split(5, (0.6, 0.2, 0.2))
    assert (list(s.train), list(s.val), list(s.test)) == ([0, 1, 2], [3], [4])
    with pytest.raises(TooFewWindows):
        chronological_split(10, (0.5, 0.5, 0.0))
    with pytest.raises(InvalidConfig):
        chronological_split(10, (0.5, 0.6, 0.1))


@given(st.integers(5, 5000), st.floats(0.2, 0.8), st.floats(0.05, 0.5))
def test_split_partitions(n, a, b):
    c = 1.0 - a - b
    if c <= 0.01:
        return
    try:
        s = chronological_split(n, (a, b, c))
    except TooFewWindows:
        return
    assert s.train.start == 0 and s.train.stop == s.val.start
    assert s.val.stop == s.test.start and s.test.stop == n
    assert min(len(s.train), len(s.val), len(s.test)) >= 1


def test_early_stopping():
    assert early_stopping_trace([0.5, 0.6, 0.55, 0.54, 0.53], 2) == (2, 4)
    assert early_stopping_trace([0.1, 0.2, 0.3, 0.4], 10) == (4, 4)
    es = EarlyStopper(3)
    es.update(0.9, 0.5)
    assert es.update(0.9, 0.4) and es.best_epoch == 2
    assert not es.update(0.9, 0.45)


@pytest.fixture(scope="module")
def data():
    log = generate_stream(SynthConfig(n_rows=4000, n_addresses=400, seed=2, precursor_strength=1.0))
    return prepare_data(engineer_features(log), L=30, h=5)


def tiny(variant="full", seed=0, **kw):
    base = dict(gcn_sizes=(8,), lstm_hidden=8, mlp_sizes=(8,), lr=3e-3, batch_targets=16, chunk=8,
                seed=seed, variant=make_variant(variant))
    base.update(kw)
    return ModelConfig(**base)


def test_purging_and_targets(data):
    h, L = data.h, data.L
    for name in ("train", "val"):
        starts = data.starts(name)
        stop = getattr(data.split, name).stop
        assert starts.max() // L + h < stop
    label = np.asarray(data.table.label)
    starts = data.starts("test")
    brute = [int(label[s + h * L:s + (h + 1) * L].max()) for s in starts]
    assert data.targets(starts).tolist() == brute
    t_alert, t_event = data.times(starts)
    assert np.all(t_alert == t_event - h * data.duration)


def test_shuffle_keeps_prevalence(data):
    sh = shuffle_label_blocks(data.table, data.L, seed=1)
    assert sh.label.sum() == data.table.label.sum()
    a = np.asarray(data.table.label[:3990]).reshape(-1, 30).max(axis=1)
    b = np.asarray(sh.label[:3990]).reshape(-1, 30).max(axis=1)
    assert a.sum() == b.sum() and not np.array_equal(a, b)


def test_training_is_deterministic(data):
    r1 = train(tiny(), data, patience=2, max_epochs=3)
    r2 = train(tiny(), data, patience=2, max_epochs=3)
    assert json.dumps(r1.log) == json.dumps(r2.log)
    assert r1.best_epoch == max(range(len(r1.log)), key=lambda i: (r1.log[i]["val_pr_auc"],
                                                                   -r1.log[i]["val_loss"])) + 1
    rep = evaluate(r1.model, data, "test")
    assert len(rep["score"]) == len(data.starts("test"))
    assert all(a == e - data.h * data.duration for a, e in zip(rep["t_alert"], rep["t_event"]))


def test_train_rejects_mismatched_data(data):
    with pytest.raises(InvalidConfig):
        train(tiny(h=3), data)


def test_ablation_table(data, tmp_path):
    from leadwarn.pv_sampling import PVConfig
    variants = ["baseline", "temporal_only", "full"]
    res = run_ablation(data, [0, 1], variants, tiny(pv=PVConfig(10, 1.5, 100)), patience=1, max_epochs=1)
    assert [r["variant"] for r in res.table] == variants
    full = next(r for r in res.table if r["variant"] == "full")
    assert full["delta_vs_full"] == 0.0
    vals = [r["metrics"]["pr_auc"] for r in res.runs if r["variant"] == "baseline"]
    base = res.table[0]
    assert base["pr_auc_mean"] == pytest.approx(np.mean(vals))
    assert base["pr_auc_std"] == pytest.approx(np.std(vals, ddof=1))
    write_table_iii(res.table, tmp_path / "t3.csv")
    assert len((tmp_path / "t3.csv").read_text().splitlines()) == 4
    again = run_ablation(data, [0, 1], variants, tiny(pv=PVConfig(10, 1.5, 100)), patience=1, max_epochs=1)
    assert again.to_json() == res.to_json()


def test_aggregate_order():
    runs = [{"variant": v, "seed": s, "metrics": {k: 0.1 * s + i for k in
             ("accuracy", "precision", "recall", "f1", "roc_auc", "pr_auc")}}
            for i, v in enumerate(["full", "a", "b"]) for s in range(3)]
    rows = aggregate(runs, ["b", "full", "a"])
    assert [r["variant"] for r in rows] == ["b", "full", "a"]
    assert rows[1]["delta_vs_full"] == 0.0 and rows[0]["delta_vs_full"] == pytest.approx(2.0)


def test_degenerate_validation_warns():
    log = generate_stream(SynthConfig(n_rows=3000, n_addresses=300, seed=4))
    table = engineer_features(log)
    table = type(table)(table.columns, table.usd_value, np.zeros(len(table), dtype=np.int64), table.code_maps)
    data = prepare_data(table, 30, 5)
    with pytest.warns(DegenerateSplit):
        train(tiny(variant="no_pv"), data, patience=1, max_epochs=1)
