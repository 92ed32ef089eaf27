"""
Training one model and reading its scores
=========================================

Train the full variant on a small stream with early stopping on validation
PR-AUC, then score the test windows.
"""

import numpy as np

from leadwarn import engineer_features, generate_stream
from leadwarn.model import ModelConfig, make_variant
from leadwarn.synth import SynthConfig
from leadwarn.train_eval import evaluate, prepare_data, select_pv_config, train

table = engineer_features(generate_stream(SynthConfig(n_rows=8000, n_addresses=800, seed=2)))
data = prepare_data(table, L=30, h=5)
print("splits (windows):", data.split.to_dict())

pv = select_pv_config(data)[0]
cfg = ModelConfig(gcn_sizes=(16, 16), lstm_hidden=32, mlp_sizes=(16,), variant=make_variant("full"), pv=pv)
result = train(cfg, data, patience=3, max_epochs=15,
               on_epoch=lambda e: print("epoch {epoch:>2}  loss {train_loss:.4f}  val PR-AUC {val_pr_auc:.4f}".format(**e)))
print("kept epoch", result.best_epoch, "of", result.stopped_epoch)

rep = evaluate(result.model, data, "test")
m = rep["metrics"]
print("test PR-AUC %.4f  ROC-AUC %.4f  F1@0.5 %.4f" % (m["pr_auc"], m["roc_auc"], m["f1"]))
print("positive share of test windows", np.mean(rep["target"]).round(3), "(the PR-AUC of a random scorer)")

top = np.argsort(rep["score"])[::-1][:5]
for i in top:
    print("frame", rep["frame_index"][i], "alert", rep["t_alert"][i], "event", rep["t_event"][i],
          "score %.3f" % rep["score"][i], "target", rep["target"][i])
