"""Run configuration: one JSON document with fixed sections.

Unknown keys are rejected at every level. The resolved document (defaults
filled in) and its hash are written beside every run's outputs.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import fields
from pathlib import Path

from .errors import InvalidConfig
from .ingest import DEFAULT_SCHEMA
from .pv_sampling import DEFAULT_GRID
from .synth import SynthConfig
from .windowing import DEFAULT_H_CANDIDATES, DEFAULT_W_CANDIDATES

DEFAULTS = {
    "ingest": {"path": None, "schema": dict(DEFAULT_SCHEMA)},
    "features": {"code_maps": None},
    "pv_grid": {"n": list(DEFAULT_GRID["n"]), "z_th": list(DEFAULT_GRID["z_th"]),
                "k_max": list(DEFAULT_GRID["k_max"]), "neg_ratio": 1.0, "fixed": None},
    "window_grid": {"w": list(DEFAULT_W_CANDIDATES), "h": list(DEFAULT_H_CANDIDATES)},
    "model": {"L": 30, "h": 5, "curvature_c": 1.0, "gcn_sizes": [32, 32], "lstm_hidden": 64,
              "mlp_sizes": [32], "lr": 3e-3, "batch_targets": 16, "chunk": 16,
              "clip_norm": 3.0, "pool_space": "ball", "variant": "full"},
    "train": {"patience": 5, "max_epochs": 100, "seeds": list(range(10)),
              "fractions": [0.6, 0.2, 0.2],
              "variants": ["baseline", "no_pv", "no_hyp", "pv_only", "structure_only",
                           "temporal_only", "full"]},
    "synth": {f.name: f.default for f in fields(SynthConfig)},
    "output_dir": "runs/default",
}

# sections whose values are free-form mappings rather than fixed key sets
_OPEN_SECTIONS = {("ingest", "schema")}


def _merge(defaults: dict, given: dict, where: str) -> dict:
    unknown = set(given) - set(defaults)
    if unknown:
        raise InvalidConfig(f"unknown key(s) in {where or 'config'}: {', '.join(sorted(unknown))}")
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        path = f"{where}.{k}" if where else k
        if isinstance(defaults[k], dict) and tuple(path.split(".")) not in _OPEN_SECTIONS:
            if not isinstance(v, dict):
                raise InvalidConfig(f"{path} must be an object")
            out[k] = _merge(defaults[k], v, path)
        else:
            out[k] = v
    return out


class RunConfig:
    def __init__(self, data: dict | None = None):
        self.data = _merge(DEFAULTS, data or {}, "")
        # validate eagerly so bad configs fail before any work is done
        self.synth_config()
        from .model import make_variant
        make_variant(self.data["model"]["variant"])
        for v in self.data["train"]["variants"]:
            make_variant(v)
        if self.data["model"]["pool_space"] not in ("ball", "tangent"):
            raise InvalidConfig("model.pool_space must be 'ball' or 'tangent'")

    @classmethod
    def load(cls, path) -> "RunConfig":
        if path is None:
            return cls()
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{path}: not valid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise InvalidConfig("config root must be an object")
        return cls(data)

    def __getitem__(self, key):
        return self.data[key]

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=1)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    @property
    def output_dir(self) -> Path:
        return Path(self.data["output_dir"])

    def write_resolved(self, out_dir=None) -> Path:
        out = Path(out_dir or self.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.resolved.json").write_text(self.to_json() + "\n", encoding="utf-8")
        (out / "config.hash").write_text(self.hash + "\n", encoding="utf-8")
        return out

    def synth_config(self) -> SynthConfig:
        return SynthConfig.from_dict(self.data["synth"])

    def model_config(self, seed: int = 0, variant: str | None = None, pv=None):
        from .model import ModelConfig, make_variant
        m = dict(self.data["model"])
        name = variant or m.pop("variant")
        m.pop("variant", None)
        m["gcn_sizes"] = tuple(m["gcn_sizes"])
        m["mlp_sizes"] = tuple(m["mlp_sizes"])
        return ModelConfig(seed=seed, variant=make_variant(name), pv=pv, **m)

    def pv_grid(self) -> dict:
        g = self.data["pv_grid"]
        return {"n": g["n"], "z_th": g["z_th"], "k_max": g["k_max"]}

    def fixed_pv(self):
        from .pv_sampling import PVConfig
        fixed = self.data["pv_grid"]["fixed"]
        if fixed is None:
            return None
        return PVConfig(int(fixed["n"]), float(fixed["z_th"]), int(fixed["k_max"]),
                        float(fixed.get("neg_ratio", self.data["pv_grid"]["neg_ratio"])))
