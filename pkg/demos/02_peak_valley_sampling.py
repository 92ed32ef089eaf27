"""
Peak-valley events and event-centred training windows
=====================================================

Bursts in the USD value series are found with a trailing z-score. Training
windows are centred on them and topped up with event-free windows.
"""

import numpy as np

from leadwarn import engineer_features, generate_stream
from leadwarn.pv_sampling import PVConfig, detect_peaks_valleys, resample_pv
from leadwarn.synth import SynthConfig
from leadwarn.train_eval import prepare_data, select_pv_config

# toy series: one spike among ones
series = np.ones(9)
series[4] = 100.0
ev = detect_peaks_valleys(series, PVConfig(n=5, z_th=2.0, k_max=5))
print("peaks", ev.peaks, "valleys", ev.valleys, "z", ev.zscores)

table = engineer_features(generate_stream(SynthConfig(n_rows=6000, n_addresses=600, seed=1)))
usd = table.usd_value
ev = detect_peaks_valleys(usd, PVConfig(n=30, z_th=2.0, k_max=200))
print(len(ev.peaks), "peaks and", len(ev.valleys), "valleys in", len(usd), "rows")

starts = resample_pv(table, ev, L=30, neg_ratio=1.0, rng_seed=0)
print(len(starts), "training windows; first few start rows", starts[:8])

# the grid search scores each setting by the validation F1 of a logistic baseline
data = prepare_data(table, L=30, h=5)
best, f1, search_log = select_pv_config(data, {"n": [10, 30], "z_th": [1.5, 2.5], "k_max": [100, 500]})
print("selected", best.key, "val F1", round(f1, 3))
for row in search_log:
    print(row)
