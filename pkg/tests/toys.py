"""Small random graph/sequence instances shared by the gradient tests."""
import numpy as np

from leadwarn.graph_builder import normalize_adjacency
from leadwarn.model import GraphBatch, LeadModel, ModelConfig, make_variant
from leadwarn.nn_core import bce_with_logits, grad_check


class ToySnapshot:
    def __init__(self, n, edges, X):
        self.n_nodes = n
        self.adjacency_norm = normalize_adjacency(n, edges)
        self._X = X

    def model_inputs(self):
        return self._X


def toy_instance(seed, variant="full", d=7, pool_space="ball"):
    """Model with randomized parameters on at most 6 nodes and 4 frames."""
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(gcn_sizes=(5, 4), lstm_hidden=6, mlp_sizes=(5,), seed=seed,
                      variant=make_variant(variant), pool_space=pool_space)
    model = LeadModel(cfg, d)
    for p in model.parameters():
        p.values[...] = rng.normal(scale=0.6, size=p.shape)
    if model.scale is not None:
        model.scale.values[...] = 1.0
    snaps = []
    T = int(rng.integers(2, 5))
    for _ in range(T):
        n = int(rng.integers(1, 7))
        edges = rng.integers(0, n, size=(int(rng.integers(1, 8)), 2))
        snaps.append(ToySnapshot(n, edges, rng.normal(size=(n, d))))
    graphs = GraphBatch.from_snapshots(snaps)
    idx = np.arange(T)[None, :]
    y = rng.integers(0, 2, size=(1, T))
    return model, graphs, idx, y


def chain_grad_error(seed, variant="full", pool_space="ball"):
    model, graphs, idx, y = toy_instance(seed, variant, pool_space=pool_space)

    def forward_backward():
        model.zero_grad()
        _, logit, cache = model.forward(graphs, idx)
        loss, dlogit = bce_with_logits(logit, y)
        model.backward(dlogit, cache)
        return float(np.sum(loss))

    return grad_check(forward_backward, model.parameters())
