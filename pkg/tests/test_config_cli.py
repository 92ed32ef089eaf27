import csv
import json
import subprocess
import sys

import pytest

from leadwarn.cli import main
from leadwarn.config import RunConfig
from leadwarn.errors import InvalidConfig, ValidationError

SMALL = {
    "synth": {"n_rows": 4000, "n_addresses": 400, "precursor_strength": 1.0},
    "model": {"gcn_sizes": [8], "lstm_hidden": 8, "mlp_sizes": [8], "chunk": 8},
    "train": {"patience": 1, "max_epochs": 1, "seeds": [0, 1], "variants": ["baseline", "full"]},
    "pv_grid": {"n": [10], "z_th": [1.5, 2.0], "k_max": [100]},
    "window_grid": {"w": [30, 60], "h": [5, 10]},
}


def write_config(tmp_path, extra=None, name="c.json"):
    cfg = json.loads(json.dumps(SMALL))
    cfg["output_dir"] = str(tmp_path / "out")
    for k, v in (extra or {}).items():
        cfg[k] = v
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def test_config_defaults_and_hash():
    a, b = RunConfig(), RunConfig({})
    assert a.hash == b.hash
    assert RunConfig({"model": {"lr": 0.01}}).hash != a.hash
    with pytest.raises(InvalidConfig):
        RunConfig({"model": {"learning_rate": 0.01}})
    with pytest.raises(ValidationError):
        RunConfig({"model": {"variant": "nope"}})


def test_unknown_subcommand(capsys):
    assert main(["frobnicate"]) == 1
    err = capsys.readouterr().err
    assert json.loads(err.splitlines()[0])["status"] == 1
    assert "usage" in err


def test_unknown_config_key(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"modle": {}}))
    assert main(["synth", "--config", str(p)]) == 1
    assert json.loads(capsys.readouterr().err.splitlines()[0])["error"] == "InvalidConfig"


def test_missing_input(tmp_path):
    assert main(["ingest", "--config", str(write_config(tmp_path)), "--input", str(tmp_path / "nope.csv")]) == 1


def test_pipeline(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["synth", "--config", str(cfg)]) == 0
    tx = out / "transactions.csv"
    summary = json.loads((out / "synth_summary.json").read_text())
    assert summary["rows"] == 4000
    assert main(["ingest", "--config", str(cfg), "--input", str(tx)]) == 0
    assert json.loads((out / "load_summary.json").read_text())["rows_kept"] == 4000
    assert main(["features", "--config", str(cfg), "--input", str(tx)]) == 0
    assert (out / "features.csv").exists() and (out / "code_maps.json").exists()
    assert main(["wh-search", "--config", str(cfg), "--input", str(tx)]) == 0
    with open(out / "window_horizon_grid.csv") as fh:
        reader = csv.reader(fh)
        assert next(reader) == ["window", "horizon", "accuracy", "recall", "precision", "f1",
                                "roc_auc", "pr_auc"]
        assert len(list(reader)) == 4
    assert main(["pv-search", "--config", str(cfg), "--input", str(tx)]) == 0
    assert json.loads((out / "pv_selected.json").read_text())["n"] == 10
    assert main(["train", "--config", str(cfg), "--input", str(tx), "--variant", "full", "--seed", "1"]) == 0
    ckpt = out / "checkpoint_full_seed1.json"
    assert main(["evaluate", "--config", str(cfg), "--input", str(tx), "--checkpoint", str(ckpt)]) == 0
    metrics = json.loads((out / "metrics_full_seed1_test.json").read_text())
    assert 0 <= metrics["pr_auc"] <= 1
    with open(out / "scores_full_seed1_test.csv") as fh:
        assert next(csv.reader(fh)) == ["frame_index", "t_alert", "t_event", "score", "target"]
    assert main(["ablate", "--config", str(cfg), "--input", str(tx)]) == 0
    first = (out / "results.json").read_bytes()
    res = json.loads(first)
    assert len(res["runs"]) == 4 and [r["variant"] for r in res["aggregate"]] == ["baseline", "full"]
    assert main(["report", "--config", str(cfg)]) == 0
    report = (out / "report.md").read_text()
    assert "Full model" in report and "| 30 | 5 |" in report
    assert (out / "config.hash").read_text().strip() == RunConfig.load(cfg).hash
    assert main(["ablate", "--config", str(cfg), "--input", str(tx)]) == 0
    assert (out / "results.json").read_bytes() == first


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "leadwarn", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "wh-search" in proc.stdout
