import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leadwarn.errors import EmptyGrid, NoEvents, SeriesTooShort
from leadwarn.pv_sampling import (PVConfig, PVEvents, detect_peaks_valleys, grid_configs,
                                  resample_pv, search_pv_config)


def brute_force_events(series, n, z_th, k_max):
    """Independent oracle: explicit loop with the statistics module's formulas."""
    cands = []
    for i in range(n - 1, len(series)):
        w = [float(v) for v in series[i - n + 1:i + 1]]
        mean = sum(w) / n
        std = (sum((v - mean) ** 2 for v in w) / n) ** 0.5
        z = 0.0 if std <= 1e-12 * max(abs(mean), 1.0) else (series[i] - mean) / std
        if abs(z) >= z_th:
            cands.append((i, z))
    if len(cands) > k_max:
        cands = sorted(cands, key=lambda iz: (-abs(iz[1]), iz[0]))[:k_max]
    return sorted(i for i, z in cands if z > 0), sorted(i for i, z in cands if z < 0)


def test_single_spike():
    s = [1.0] * 9
    s[4] = 100.0
    # at the spike z = sqrt(n - 1) = 2 exactly, which must count as >= z_th
    ev = detect_peaks_valleys(s, PVConfig(n=5, z_th=2, k_max=5))
    assert ev.peaks == [4] and ev.valleys == []
    assert ev.zscores[4] == pytest.approx(2.0, abs=1e-12)


def test_constant_series_has_no_events():
    ev = detect_peaks_valleys([3.3] * 50, PVConfig(n=5, z_th=0.5, k_max=10))
    assert len(ev) == 0


def test_k_max_keeps_largest():
    rng = np.random.default_rng(0)
    s = rng.normal(0, 0.01, size=200)
    s[50] += 1.0
    s[150] += 0.1
    ev_all = detect_peaks_valleys(s, PVConfig(n=30, z_th=2.5, k_max=1000))
    big, small = ev_all.zscores[50], ev_all.zscores[150]
    assert abs(big) > abs(small) >= 2.5
    ev = detect_peaks_valleys(s, PVConfig(n=30, z_th=2.5, k_max=1))
    assert ev.indices == [50]


def test_series_too_short():
    with pytest.raises(SeriesTooShort):
        detect_peaks_valleys([1.0, 2.0], PVConfig(n=5))


def test_invalid_config():
    for bad in (dict(n=1), dict(z_th=0), dict(k_max=0), dict(neg_ratio=0)):
        with pytest.raises(ValueError):
            PVConfig(**bad)


@pytest.mark.parametrize("seed", range(20))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    length = int(rng.integers(10, 400))
    s = rng.lognormal(0, 1.5, size=length)
    s[rng.random(length) < 0.1] = 5.0  # plateaus give zero-variance stretches
    n = int(rng.integers(2, 12))
    cfg = PVConfig(n=n, z_th=float(rng.choice([0.5, 1.5, 2.0, 2.5])), k_max=int(rng.integers(1, 30)))
    ev = detect_peaks_valleys(s, cfg)
    assert (ev.peaks, ev.valleys) == brute_force_events(s, cfg.n, cfg.z_th, cfg.k_max)
    assert set(ev.peaks).isdisjoint(ev.valleys)
    assert len(ev) <= cfg.k_max
    assert all(abs(ev.zscores[i]) >= cfg.z_th for i in ev.indices)


def test_resample_examples():
    ev = PVEvents([50], [])
    assert 35 in resample_pv(200, ev, 30, neg_ratio=1.0, rng_seed=0)
    starts = resample_pv(200, PVEvents([2], []), 30, rng_seed=0)
    assert 0 in starts
    ev = PVEvents([40], [120])
    starts = resample_pv(300, ev, 30, neg_ratio=1.0, rng_seed=7)
    assert len(starts) == 4 and len(set(starts)) == 4
    assert starts == sorted(starts)
    assert {25, 105} <= set(starts)
    negatives = set(starts) - {25, 105}
    for s in negatives:
        assert not any(s <= i < s + 30 for i in (40, 120))


def test_resample_no_events():
    with pytest.raises(NoEvents):
        resample_pv(100, PVEvents([], []), 10)


@given(st.integers(0, 1000), st.integers(40, 400), st.integers(1, 40))
def test_resample_covers_every_event(seed, N, L):
    rng = np.random.default_rng(seed)
    idx = sorted(set(rng.integers(0, N, size=int(rng.integers(1, 8))).tolist()))
    ev = PVEvents(idx, [])
    a = resample_pv(N, ev, L, 1.0, seed)
    assert a == resample_pv(N, ev, L, 1.0, seed)
    for i in idx:
        assert any(s <= i < s + L for s in a)
    assert all(0 <= s <= N - L for s in a)


def test_search_argmax_and_ties():
    grid = {"n": [10], "z_th": [1.5], "k_max": [100]}
    best, score, log = search_pv_config(None, grid, lambda c: 0.42)
    assert best.key == (10, 1.5, 100) and score == 0.42 and len(log) == 1
    cfgs = [PVConfig(10, 1.5, 100), PVConfig(30, 2.0, 100), PVConfig(60, 2.5, 100)]
    scores = dict(zip([c.key for c in cfgs], [0.5, 0.9, 0.7]))
    best, score, _ = search_pv_config(None, cfgs, lambda c: scores[c.key])
    assert best.key == (30, 2.0, 100) and score == 0.9
    tied = [PVConfig(30, 2.0, 500), PVConfig(30, 1.5, 1000)]
    best, _, _ = search_pv_config(None, tied, lambda c: 0.8)
    assert best.key == (30, 1.5, 1000)


def test_search_is_permutation_invariant():
    cfgs = grid_configs()
    rng = np.random.default_rng(5)
    scores = {c.key: float(v) for c, v in zip(cfgs, rng.choice([0.1, 0.6, 0.6, 0.3], size=len(cfgs)))}
    ref = search_pv_config(None, cfgs, lambda c: scores[c.key])[0]
    for perm in range(10):
        order = list(np.random.default_rng(perm).permutation(len(cfgs)))
        got = search_pv_config(None, [cfgs[i] for i in order], lambda c: scores[c.key])[0]
        assert got == ref
    winners = [k for k, v in scores.items() if v == max(scores.values())]
    assert ref.key == min(winners)


def test_empty_grid():
    with pytest.raises(EmptyGrid):
        search_pv_config(None, {"n": [], "z_th": [1.0], "k_max": [1]}, lambda c: 0.0)
    with pytest.raises(EmptyGrid):
        search_pv_config(None, [], lambda c: 0.0)


def test_default_grid_size():
    assert len(grid_configs()) == 3 * 4 * 3
    keys = [c.key for c in grid_configs()]
    assert keys == list(itertools.product((10, 30, 60), (1.5, 2.0, 2.5, 3.0), (100, 500, 1000)))
