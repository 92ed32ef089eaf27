"""
From raw transactions to horizon-aligned windows
================================================

Generate a labelled stream, engineer causal features, cut it into frames
and attach to every frame the label of the frame ``h`` steps ahead.
"""

import numpy as np

from leadwarn import engineer_features, generate_stream
from leadwarn.synth import SynthConfig, degree_tail_check
from leadwarn.windowing import align_labels, frame_duration, frame_windows

# a small stream keeps this quick; the defaults give 20k rows
log = generate_stream(SynthConfig(n_rows=6000, n_addresses=600, seed=1))
labels = log.column("label")
print("rows", len(log), "abnormal fraction", labels.mean())

# address popularity is heavy tailed: log-degree falls roughly linearly in log-rank
print("degree tail slope", round(degree_tail_check(log), 3))

table = engineer_features(log)
print("feature columns", table.feature_dim)
print(np.round(table.matrix()[:3, :6], 3))

L, h = 30, 5
frames = frame_windows(table, L)
duration = frame_duration(table.timestamp, L)
windows = align_labels(frames, h, duration)
targets = np.array([w.target for w in windows])
print(len(frames), "frames,", len(windows), "labelled windows, positive share", targets.mean().round(3))

# every alert is issued h frame-durations before the frame it predicts
w = windows[np.flatnonzero(targets)[0]]
print("window", w.index, "alert at", w.t_alert, "event frame starts", w.t_event,
      "lead", (w.t_event - w.t_alert) / 60, "min")
