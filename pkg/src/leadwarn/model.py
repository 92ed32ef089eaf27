"""Window scorer: optional ball map -> tangent-space GCN -> pool -> LSTM -> MLP.

Frames of a batch are embedded together as one block-diagonal graph; the
per-frame embeddings are then gathered into ``(batch, time)`` sequences by an
index matrix in which ``-1`` marks right padding.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import hyperbolic as hyp
from .errors import EmptySequence, ShapeMismatch, UnknownVariant
from .nn_core import (LSTMParams, ParamTensor, glorot, gcn_backward, gcn_forward,
                      lstm_step_backward, lstm_step_forward, mlp_backward, mlp_forward,
                      pool_matrix, zeros)
from .pv_sampling import PVConfig

VARIANT_NAMES = ("baseline", "no_pv", "no_hyp", "pv_only", "structure_only", "temporal_only", "full")

VARIANT_LABELS = {
    "baseline": "GCN-LSTM (Baseline)",
    "no_pv": "w/o PV (Hyp + GCN-LSTM)",
    "no_hyp": "w/o Hyperbolic (PV + GCN-LSTM)",
    "pv_only": "PV only (Euclid + GCN-LSTM)",
    "structure_only": "Structure-only (PV + Hyp + GCN)",
    "temporal_only": "Temporal-only (PV + Hyp + LSTM)",
    "full": "Full model",
}


@dataclass(frozen=True)
class VariantSpec:
    use_pv: bool = True
    use_hyperbolic: bool = True
    use_gcn: bool = True
    use_lstm: bool = True
    name: str = "full"

    def __post_init__(self):
        if not (self.use_gcn or self.use_lstm):
            raise ValueError("at least one of GCN and LSTM must be enabled")

    @property
    def flags(self) -> tuple:
        return (int(self.use_pv), int(self.use_hyperbolic), int(self.use_gcn), int(self.use_lstm))


_VARIANT_FLAGS = {
    "baseline": (0, 0, 1, 1),
    "no_pv": (0, 1, 1, 1),
    "no_hyp": (1, 0, 1, 1),
    # same component set as no_hyp; kept as a separately labelled run
    "pv_only": (1, 0, 1, 1),
    "structure_only": (1, 1, 1, 0),
    "temporal_only": (1, 1, 0, 1),
    "full": (1, 1, 1, 1),
}


def make_variant(name: str) -> VariantSpec:
    try:
        pv, hb, gcn, lstm = _VARIANT_FLAGS[name]
    except KeyError:
        raise UnknownVariant(f"unknown variant {name!r}; choose from {', '.join(VARIANT_NAMES)}") from None
    return VariantSpec(bool(pv), bool(hb), bool(gcn), bool(lstm), name)


@dataclass
class ModelConfig:
    L: int = 30
    h: int = 5
    curvature_c: float = 1.0
    gcn_sizes: tuple = (32, 32)
    lstm_hidden: int = 64
    mlp_sizes: tuple = (32,)
    seed: int = 0
    lr: float = 3e-3
    batch_targets: int = 16
    chunk: int = 16
    clip_norm: float = 3.0
    pool_space: str = "ball"
    variant: VariantSpec = field(default_factory=lambda: make_variant("full"))
    pv: PVConfig | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gcn_sizes"] = list(self.gcn_sizes)
        d["mlp_sizes"] = list(self.mlp_sizes)
        return d

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_variant(self, name: str) -> "ModelConfig":
        return replace(self, variant=make_variant(name))


@dataclass
class GraphBatch:
    X: np.ndarray            # stacked node inputs
    A: sp.csr_matrix         # block-diagonal normalized adjacency
    P: sp.csr_matrix         # frames x nodes mean-pool operator
    A_T: sp.csr_matrix = None
    P_T: sp.csr_matrix = None

    def __post_init__(self):
        self.A_T = self.A.T.tocsr()
        self.P_T = self.P.T.tocsr()

    @property
    def n_frames(self) -> int:
        return self.P.shape[0]

    @classmethod
    def from_snapshots(cls, snaps: Sequence) -> "GraphBatch":
        if not snaps:
            raise EmptySequence("no snapshots to batch")
        X = np.vstack([s.model_inputs() for s in snaps])
        sizes = [s.n_nodes for s in snaps]
        # hand-rolled block diagonal: much faster than sp.block_diag for many small blocks
        offsets = np.r_[0, np.cumsum(sizes)]
        mats = [s.adjacency_norm for s in snaps]
        rows = np.concatenate([np.repeat(np.arange(m.shape[0]), np.diff(m.indptr)) + o
                               for m, o in zip(mats, offsets)])
        cols = np.concatenate([m.indices + o for m, o in zip(mats, offsets)])
        vals = np.concatenate([m.data for m in mats])
        A = sp.csr_matrix((vals, (rows, cols)), shape=(offsets[-1], offsets[-1]))
        return cls(X, A, pool_matrix(sizes))


class InputScaler:
    """Per-feature standardization, then division by sqrt(d) so typical rows
    have norm near one."""

    def __init__(self, mean=None, std=None):
        self.mean = None if mean is None else np.asarray(mean, dtype=np.float64)
        self.std = None if std is None else np.asarray(std, dtype=np.float64)

    def fit(self, X):
        self.mean = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0] = 1.0
        self.std = std
        return self

    def __call__(self, X):
        if self.mean is None:
            return X
        return (X - self.mean) / self.std / np.sqrt(X.shape[1])


class LeadModel:
    def __init__(self, cfg: ModelConfig, input_dim: int):
        self.cfg = cfg
        self.input_dim = input_dim
        self.scaler = InputScaler()
        v = cfg.variant
        rng = np.random.default_rng(cfg.seed)
        self.gcn = []
        dim = input_dim
        if v.use_hyperbolic:
            self.scale = ParamTensor("hyp.scale", np.ones(1))
        else:
            self.scale = None
        if v.use_gcn:
            for k, out in enumerate(cfg.gcn_sizes):
                self.gcn.append((glorot(rng, f"gcn.{k}.W", dim, out), zeros(f"gcn.{k}.b", (out,))))
                dim = out
        self.embed_dim = dim
        self.lstm = None
        if v.use_lstm:
            self.lstm = LSTMParams.init(rng, dim, cfg.lstm_hidden)
            dim = cfg.lstm_hidden
        self.mlp = []
        for k, out in enumerate(tuple(cfg.mlp_sizes) + (1,)):
            self.mlp.append((glorot(rng, f"mlp.{k}.W", dim, out), zeros(f"mlp.{k}.b", (out,))))
            dim = out

    # ------------------------------------------------------------ parameters
    def parameters(self) -> list[ParamTensor]:
        params = []
        if self.scale is not None:
            params.append(self.scale)
        for W, b in self.gcn:
            params += [W, b]
        if self.lstm is not None:
            params += self.lstm.tensors()
        for W, b in self.mlp:
            params += [W, b]
        return params

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state(self) -> dict:
        return {
            "config_hash": self.cfg.hash(),
            "input_dim": self.input_dim,
            "scaler": {"mean": self.scaler.mean.tolist(), "std": self.scaler.std.tolist()}
            if self.scaler.mean is not None else None,
            "params": [{"name": p.name, "shape": list(p.shape), "values": p.values.ravel().tolist()}
                       for p in self.parameters()],
        }

    def load_state(self, state: dict):
        by_name = {p.name: p for p in self.parameters()}
        if set(by_name) != {d["name"] for d in state["params"]}:
            raise ShapeMismatch("checkpoint parameters do not match this variant")
        for d in state["params"]:
            p = by_name[d["name"]]
            if list(p.shape) != list(d["shape"]):
                raise ShapeMismatch(f"{p.name}: shape {p.shape} vs {d['shape']}")
            p.values[...] = np.asarray(d["values"], dtype=np.float64).reshape(p.shape)
        if state.get("scaler"):
            self.scaler = InputScaler(state["scaler"]["mean"], state["scaler"]["std"])
        return self

    def snapshot_values(self) -> dict:
        return {p.name: p.values.copy() for p in self.parameters()}

    def restore_values(self, values: dict):
        for p in self.parameters():
            p.values[...] = values[p.name]

    # ------------------------------------------------------------- embedding
    def embed_frames(self, graphs: GraphBatch):
        """Per-frame structural vectors ``g`` of shape (frames, embed_dim)."""
        v, c = self.cfg.variant, self.cfg.curvature_c
        X = self.scaler(graphs.X)
        if X.shape[1] != self.input_dim:
            raise ShapeMismatch(f"node inputs have {X.shape[1]} columns, expected {self.input_dim}")
        cache = {}
        if v.use_hyperbolic:
            Xc = hyp.clip_norm(X, self.cfg.clip_norm)
            Xs = self.scale.values[0] * Xc
            B0 = hyp.exp_map_0(Xs, c)
            U = hyp.log_map_0(B0, c)
            cache["in"] = (X, Xc, Xs, B0)
        else:
            U = X
        layers = []
        out = U
        for k, (W, b) in enumerate(self.gcn):
            H, gc = gcn_forward(U, graphs.A, W, b)
            if v.use_hyperbolic:
                Bk = hyp.exp_map_0(H, c)
                layers.append((gc, H, Bk))
                U = hyp.log_map_0(Bk, c)
                out = Bk if self.cfg.pool_space == "ball" else U
            else:
                layers.append((gc, H, None))
                out = H
                U = H
        cache["layers"] = layers
        G = graphs.P @ out
        return G, cache

    def embed_backward(self, dG, graphs: GraphBatch, cache):
        v, c = self.cfg.variant, self.cfg.curvature_c
        d_out = graphs.P_T @ dG
        for k in range(len(self.gcn) - 1, -1, -1):
            gc, H, Bk = cache["layers"][k]
            if v.use_hyperbolic:
                if k < len(self.gcn) - 1 or self.cfg.pool_space != "ball":
                    # d_out is w.r.t. U_k = log(B_k); fold back to B_k first
                    d_out = hyp.log_map_0_vjp(Bk, d_out, c)
                dH = hyp.exp_map_0_vjp(H, d_out, c)
            else:
                dH = d_out
            d_out = gcn_backward(dH, gc, graphs.A_T)
        if v.use_hyperbolic:
            X, Xc, Xs, B0 = cache["in"]
            dB0 = hyp.log_map_0_vjp(B0, d_out, c)
            dXs = hyp.exp_map_0_vjp(Xs, dB0, c)
            self.scale.grad += np.sum(dXs * Xc)

    # -------------------------------------------------------------- sequence
    def forward(self, graphs: GraphBatch, seq_index: np.ndarray):
        """Scores for every (sequence, step); padded steps hold garbage."""
        seq_index = np.atleast_2d(np.asarray(seq_index, dtype=np.int64))
        if seq_index.size == 0 or np.all(seq_index < 0):
            raise EmptySequence("no frames in sequence batch")
        G, ecache = self.embed_frames(graphs)
        B, T = seq_index.shape
        valid = seq_index >= 0
        Xseq = np.where(valid[..., None], G[np.maximum(seq_index, 0)], 0.0)
        if self.lstm is not None:
            Hdim = self.cfg.lstm_hidden
            h = np.zeros((B, Hdim))
            c = np.zeros((B, Hdim))
            hs, lcache = [], []
            for t in range(T):
                h, c, lc = lstm_step_forward(Xseq[:, t], h, c, self.lstm)
                hs.append(h)
                lcache.append(lc)
            Hseq = np.stack(hs, axis=1)
        else:
            Hseq, lcache = Xseq, None
        prob, logit, mcache = mlp_forward(Hseq.reshape(B * T, -1), self.mlp)
        cache = (graphs, seq_index, valid, ecache, lcache, mcache, G.shape)
        return prob.reshape(B, T), logit.reshape(B, T), cache

    def backward(self, dlogit: np.ndarray, cache):
        graphs, seq_index, valid, ecache, lcache, mcache, gshape = cache
        B, T = seq_index.shape
        dH = mlp_backward(np.where(valid, dlogit, 0.0).reshape(-1), mcache).reshape(B, T, -1)
        if self.lstm is not None:
            Hdim = self.cfg.lstm_hidden
            dX = np.zeros((B, T, self.embed_dim))
            dh_next = np.zeros((B, Hdim))
            dc_next = np.zeros((B, Hdim))
            for t in range(T - 1, -1, -1):
                dx, dh_next, dc_next = lstm_step_backward(dH[:, t] + dh_next, dc_next, lcache[t], self.lstm)
                dX[:, t] = dx
        else:
            dX = dH
        dX = np.where(valid[..., None], dX, 0.0)
        dG = np.zeros(gshape)
        np.add.at(dG, seq_index[valid], dX[valid])
        self.embed_backward(dG, graphs, ecache)

    def score(self, graphs: GraphBatch, seq_index: np.ndarray, last_index: np.ndarray) -> np.ndarray:
        prob, _, _ = self.forward(graphs, seq_index)
        return prob[np.arange(len(last_index)), last_index]
