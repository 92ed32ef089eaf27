"""Hand-written forward/backward layers for the graph-sequence scorer.

Each layer is a pair of functions: ``*_forward`` returns the output plus a
cache tuple, ``*_backward`` consumes the upstream gradient and the cache,
accumulates into ``ParamTensor.grad`` and returns the input gradient.
Everything is float64 and batched along the leading axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import EmptyMatrix, NonFiniteGradient, ShapeMismatch

PROB_CLIP = 1e-7


@dataclass
class ParamTensor:
    name: str
    values: np.ndarray
    grad: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.values)

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self):
        self.grad[...] = 0.0


def glorot(rng: np.random.Generator, name: str, fan_in: int, fan_out: int, shape=None) -> ParamTensor:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    shape = (fan_in, fan_out) if shape is None else shape
    return ParamTensor(name, rng.uniform(-a, a, size=shape))


def zeros(name: str, shape) -> ParamTensor:
    return ParamTensor(name, np.zeros(shape))


def sigmoid(x):
    # split form avoids overflow in exp for large |x|
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


# ----------------------------------------------------------------- dense / GCN

def dense_forward(x, W: ParamTensor, b: ParamTensor):
    if x.shape[-1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeMismatch(f"dense: input {x.shape} vs W {W.shape}, b {b.shape}")
    return x @ W.values + b.values, (x, W, b)


def dense_backward(dout, cache):
    x, W, b = cache
    W.grad += x.T @ dout
    b.grad += dout.sum(axis=0)
    return dout @ W.values.T


def gcn_forward(H, A, W: ParamTensor, b: ParamTensor):
    """ReLU(A @ H @ W + b); ``A`` may be dense or scipy sparse."""
    if A.shape[0] != A.shape[1] or A.shape[1] != H.shape[0]:
        raise ShapeMismatch(f"gcn: adjacency {A.shape} vs features {H.shape}")
    if H.shape[1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeMismatch(f"gcn: features {H.shape} vs W {W.shape}, b {b.shape}")
    AH = A @ H
    Z = AH @ W.values + b.values
    return np.maximum(Z, 0.0), (A, AH, Z, W, b)


def gcn_backward(dout, cache, A_T=None):
    """``A_T`` lets callers pass a precomputed transpose of a sparse adjacency."""
    A, AH, Z, W, b = cache
    dZ = dout * (Z > 0)
    W.grad += AH.T @ dZ
    b.grad += dZ.sum(axis=0)
    dAH = dZ @ W.values.T
    return (A.T if A_T is None else A_T) @ dAH


def gcn_layer(H, A, W: ParamTensor, b: ParamTensor):
    return gcn_forward(H, A, W, b)[0]


def mean_pool(H):
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] == 0:
        raise EmptyMatrix("mean_pool needs at least one node")
    return H.mean(axis=0)


def mean_pool_backward(dg, n_nodes: int):
    return np.repeat(np.asarray(dg)[None, :] / n_nodes, n_nodes, axis=0)


def pool_matrix(sizes: Sequence[int]) -> sp.csr_matrix:
    """Sparse (graphs x nodes) averaging operator for stacked node blocks."""
    sizes = np.asarray(sizes, dtype=np.int64)
    if np.any(sizes <= 0):
        raise EmptyMatrix("every graph needs at least one node")
    rows = np.repeat(np.arange(len(sizes)), sizes)
    vals = np.repeat(1.0 / sizes, sizes)
    return sp.csr_matrix((vals, (rows, np.arange(sizes.sum()))),
                         shape=(len(sizes), int(sizes.sum())))


# ------------------------------------------------------------------------ LSTM

@dataclass
class LSTMParams:
    """Gate blocks are stacked as [input, forget, candidate, output]."""

    W: ParamTensor   # (input_dim, 4H)
    U: ParamTensor   # (H, 4H)
    b: ParamTensor   # (4H,)

    @property
    def hidden(self) -> int:
        return self.U.shape[0]

    def tensors(self):
        return [self.W, self.U, self.b]

    @classmethod
    def init(cls, rng, input_dim: int, hidden: int, prefix: str = "lstm"):
        W = glorot(rng, f"{prefix}.W", input_dim, hidden, shape=(input_dim, 4 * hidden))
        U = glorot(rng, f"{prefix}.U", hidden, hidden, shape=(hidden, 4 * hidden))
        b = zeros(f"{prefix}.b", (4 * hidden,))
        b.values[hidden:2 * hidden] = 1.0
        return cls(W, U, b)


def lstm_step_forward(x, h_prev, c_prev, p: LSTMParams):
    H = p.hidden
    if x.shape[-1] != p.W.shape[0] or h_prev.shape[-1] != H or c_prev.shape != h_prev.shape:
        raise ShapeMismatch(f"lstm: x {x.shape}, h {h_prev.shape}, c {c_prev.shape}")
    z = x @ p.W.values + h_prev @ p.U.values + p.b.values
    i = sigmoid(z[..., :H])
    f = sigmoid(z[..., H:2 * H])
    g = np.tanh(z[..., 2 * H:3 * H])
    o = sigmoid(z[..., 3 * H:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (x, h_prev, c_prev, i, f, g, o, tc)


def lstm_step_backward(dh, dc, cache, p: LSTMParams):
    """Returns gradients w.r.t. (x, h_prev, c_prev)."""
    x, h_prev, c_prev, i, f, g, o, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    di = dc * g
    df = dc * c_prev
    dg = dc * i
    dz = np.concatenate([di * i * (1 - i), df * f * (1 - f),
                         dg * (1 - g * g), do * o * (1 - o)], axis=-1)
    p.W.grad += x.T @ dz
    p.U.grad += h_prev.T @ dz
    p.b.grad += dz.sum(axis=0)
    return dz @ p.W.values.T, dz @ p.U.values.T, dc * f


def lstm_step(x, h_prev, c_prev, p: LSTMParams):
    h, c, _ = lstm_step_forward(np.atleast_2d(x), np.atleast_2d(h_prev), np.atleast_2d(c_prev), p)
    if np.ndim(x) == 1:
        return h[0], c[0]
    return h, c


# ------------------------------------------------------------------- MLP head

def mlp_forward(h, layers: Sequence[tuple]):
    """Hidden ReLU layers then a single logit; returns (prob, logit, cache)."""
    caches = []
    a = h
    for k, (W, b) in enumerate(layers):
        z, cache = dense_forward(a, W, b)
        last = k == len(layers) - 1
        caches.append((cache, z, last))
        a = z if last else np.maximum(z, 0.0)
    logit = a[..., 0]
    return sigmoid(logit), logit, caches


def mlp_backward(dlogit, caches):
    da = dlogit[..., None]
    for cache, z, last in reversed(caches):
        if not last:
            da = da * (z > 0)
        da = dense_backward(da, cache)
    return da


def mlp_head(h, layers):
    return mlp_forward(np.atleast_2d(h), layers)[0]


# ------------------------------------------------------------------------ loss

def bce_loss(p, y):
    """Elementwise binary cross-entropy and its gradient w.r.t. ``p``."""
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_CLIP, 1 - PROB_CLIP)
    y = np.asarray(y, dtype=np.float64)
    loss = -(y * np.log(p) + (1 - y) * np.log(1 - p))
    return loss, (p - y) / (p * (1 - p))


def bce_with_logits(logit, y):
    """Numerically stable BCE on logits; gradient is ``sigmoid(logit) - y``."""
    logit = np.asarray(logit, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    loss = np.maximum(logit, 0) - logit * y + np.log1p(np.exp(-np.abs(logit)))
    return loss, sigmoid(logit) - y


# ------------------------------------------------------------------- optimizer

class Adam:
    """Adaptive-moment update with bias correction."""

    def __init__(self, params: Iterable[ParamTensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {p.name: np.zeros_like(p.values) for p in self.params}
        self.v = {p.name: np.zeros_like(p.values) for p in self.params}
        self.t = 0

    def step(self):
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                bad = int(np.sum(~np.isfinite(p.grad)))
                raise NonFiniteGradient(f"{p.name}: {bad} non-finite gradient entries at step {self.t}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p in self.params:
            m, v = self.m[p.name], self.v[p.name]
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * p.grad ** 2
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p.values -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if not np.all(np.isfinite(p.values)):
                raise NonFiniteGradient(f"{p.name}: parameters became non-finite at step {self.t}")

    def state_dict(self) -> dict:
        return {"t": self.t, "m": {k: v.copy() for k, v in self.m.items()},
                "v": {k: v.copy() for k, v in self.v.items()}}


def optimizer_step(params: Sequence[ParamTensor], state: Adam) -> Adam:
    if [p.name for p in params] != [p.name for p in state.params]:
        raise ShapeMismatch("optimizer state does not match the parameter list")
    state.step()
    return state


# ------------------------------------------------------------- gradient check

def grad_check(forward_backward: Callable[[], float], params: Sequence[ParamTensor],
               step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``forward_backward`` must zero the gradients, run the forward and backward
    passes for the current parameter values and return the scalar loss.
    """
    forward_backward()
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.values.reshape(-1)
        gflat = ga.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = forward_backward()
            flat[k] = orig - step
            down = forward_backward()
            flat[k] = orig
            gn = (up - down) / (2 * step)
            err = abs(gflat[k] - gn) / max(1e-8, abs(gflat[k]) + abs(gn))
            worst = max(worst, err)
    forward_backward()
    return worst
