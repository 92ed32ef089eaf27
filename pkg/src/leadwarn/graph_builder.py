"""Per-window directed transaction graphs.

Funds flow from the counterparty address to the receiving address. Edges
stay directed in ``edge_list``; the propagation operator used by the GCN is
built from the symmetrized presence pattern plus self-loops.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import EmptyWindow
from .features import MODEL_FEATURES, FeatureTable

NODE_FEATURES = ("in_degree", "out_degree", "in_usd", "out_usd", "tx_count", "mean_log_usd")
EDGE_FEATURES = ("tx_count", "usd_sum", "mean_delta_t")


@dataclass
class GraphSnapshot:
    node_ids: np.ndarray          # sorted address codes
    node_feats: np.ndarray        # |V| x 6, NODE_FEATURES
    edge_list: np.ndarray         # |E| x 2 (src_idx, dst_idx), sorted
    edge_feats: np.ndarray        # |E| x 3, EDGE_FEATURES
    adjacency_norm: sp.csr_matrix
    row_feats: np.ndarray | None = None  # |V| x len(MODEL_FEATURES), incident-row means

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def model_inputs(self) -> np.ndarray:
        if self.row_feats is None:
            return self.node_feats
        return np.hstack([self.node_feats, self.row_feats])

    def to_json(self) -> str:
        return json.dumps({
            "node_ids": self.node_ids.tolist(),
            "node_features": list(NODE_FEATURES),
            "node_feats": self.node_feats.tolist(),
            "edge_list": self.edge_list.tolist(),
            "edge_features": list(EDGE_FEATURES),
            "edge_feats": self.edge_feats.tolist(),
        })

    def dump(self, path) -> None:
        Path(path).write_text(self.to_json())


def _window_table(window) -> FeatureTable:
    rows = window if isinstance(window, FeatureTable) else getattr(window, "rows", None)
    if not isinstance(rows, FeatureTable):
        raise TypeError("expected a FeatureTable slice or an object with .rows")
    return rows


def normalize_adjacency(snapshot_or_n, edge_list=None) -> sp.csr_matrix:
    """D^-1/2 (B + I) D^-1/2 with B the symmetrized 0/1 edge presence."""
    if edge_list is None:
        n, edge_list = snapshot_or_n.n_nodes, snapshot_or_n.edge_list
    else:
        n = int(snapshot_or_n)
    edge_list = np.asarray(edge_list, dtype=np.int64).reshape(-1, 2)
    src, dst = edge_list[:, 0], edge_list[:, 1]
    # presence pattern of B (both directions, duplicates collapse), then + I;
    # a self-loop thus ends up with weight 2 on the diagonal
    b_keys = np.unique(np.r_[src * n + dst, dst * n + src])
    keys, counts = np.unique(np.r_[b_keys, np.arange(n) * (n + 1)], return_counts=True)
    rows, cols = keys // n, keys % n
    vals = counts.astype(np.float64)
    deg = np.bincount(rows, weights=vals, minlength=n)
    inv_sqrt = 1.0 / np.sqrt(deg)
    vals *= inv_sqrt[rows] * inv_sqrt[cols]
    indptr = np.r_[0, np.cumsum(np.bincount(rows, minlength=n))]
    return sp.csr_matrix((vals, cols, indptr), shape=(n, n))


def build_snapshot(window, with_row_feats: bool = True) -> GraphSnapshot:
    rows = _window_table(window)
    if len(rows) == 0:
        raise EmptyWindow("window has no rows")
    c = rows.columns
    src_code = c["cp_code"]
    dst_code = c["recv_code"]
    node_ids, inv = np.unique(np.r_[src_code, dst_code], return_inverse=True)
    m = len(src_code)
    src, dst = inv[:m], inv[m:]
    n = len(node_ids)
    usd = rows.usd_value
    log_usd = c["log_usd"].astype(np.float64)
    dts = c["delta_t"].astype(np.float64)

    pair_key = src * n + dst
    keys, pair_inv = np.unique(pair_key, return_inverse=True)
    edge_list = np.column_stack([keys // n, keys % n])
    n_e = len(keys)
    e_count = np.bincount(pair_inv, minlength=n_e).astype(np.float64)
    e_usd = np.bincount(pair_inv, weights=usd, minlength=n_e)
    e_dt = np.bincount(pair_inv, weights=dts, minlength=n_e) / e_count
    edge_feats = np.column_stack([e_count, e_usd, e_dt])

    in_deg = np.bincount(edge_list[:, 1], minlength=n).astype(np.float64)
    out_deg = np.bincount(edge_list[:, 0], minlength=n).astype(np.float64)
    in_usd = np.bincount(dst, weights=usd, minlength=n)
    out_usd = np.bincount(src, weights=usd, minlength=n)
    # incidence: a self-transfer row touches its node once
    self_row = src == dst
    inc_node = np.r_[src, dst[~self_row]]
    inc_row = np.r_[np.arange(m), np.arange(m)[~self_row]]
    tx_count = np.bincount(inc_node, minlength=n).astype(np.float64)
    mean_log = np.bincount(inc_node, weights=log_usd[inc_row], minlength=n) / tx_count
    node_feats = np.column_stack([in_deg, out_deg, in_usd, out_usd, tx_count, mean_log])

    row_feats = None
    if with_row_feats:
        X = rows.matrix(MODEL_FEATURES)
        row_feats = np.zeros((n, X.shape[1]))
        np.add.at(row_feats, inc_node, X[inc_row])
        row_feats /= tx_count[:, None]

    snap = GraphSnapshot(node_ids, node_feats, edge_list, edge_feats, None, row_feats)
    snap.adjacency_norm = normalize_adjacency(snap)
    return snap
