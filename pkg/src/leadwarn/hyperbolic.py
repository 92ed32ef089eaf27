"""Poincaré-ball operations with curvature ``-c``.

Points are numpy arrays whose last axis is the ball dimension; leading axes
are treated as a batch. Every function that returns a ball point projects it
so that ``sqrt(c) * |x| <= 1 - eps``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CurvatureMismatch, DimensionMismatch

EPS = 1e-5
# below this sqrt(c)|v| the derivative terms switch to Taylor series
_SMALL = 1e-3


@dataclass(frozen=True)
class BallPoint:
    coords: np.ndarray
    c: float = 1.0

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        object.__setattr__(self, "coords", coords)
        if self.c <= 0:
            raise ValueError("curvature magnitude c must be positive")
        if np.any(self.c * np.sum(coords ** 2, axis=-1) >= 1):
            raise ValueError("point lies outside the Poincaré ball")


@dataclass(frozen=True)
class TangentVector:
    coords: np.ndarray
    base: BallPoint | None = None  # None means the origin


def _coords(x, y, c):
    """Accept raw arrays or BallPoints; validate shared curvature and dimension."""
    cs = [p.c for p in (x, y) if isinstance(p, BallPoint)]
    if len(cs) == 2 and cs[0] != cs[1]:
        raise CurvatureMismatch(f"curvatures differ: {cs[0]} vs {cs[1]}")
    if cs:
        c = cs[0]
    x = x.coords if isinstance(x, BallPoint) else np.asarray(x, dtype=np.float64)
    y = y.coords if isinstance(y, BallPoint) else np.asarray(y, dtype=np.float64)
    if x.shape[-1:] != y.shape[-1:]:
        raise DimensionMismatch(f"dimensions differ: {x.shape[-1:]} vs {y.shape[-1:]}")
    return x, y, c


def _norm(x):
    # einsum is several times faster than linalg.norm on many short rows
    return np.sqrt(np.einsum("...i,...i->...", x, x))[..., None]


def project_to_ball(v, c: float = 1.0, eps: float = EPS) -> np.ndarray:
    """Rescale any point with ``sqrt(c)|v| > 1 - eps`` onto that radius."""
    if not 0 < eps <= 1e-3:
        raise ValueError("eps must lie in (0, 1e-3]")
    v = np.asarray(v, dtype=np.float64)
    limit = (1.0 - eps) / np.sqrt(c)
    norm = _norm(v)
    scale = np.where(norm > limit, limit / np.maximum(norm, 1e-300), 1.0)
    return v * scale


def mobius_add(x, y, c: float = 1.0) -> np.ndarray:
    x, y, c = _coords(x, y, c)
    xy = np.sum(x * y, axis=-1, keepdims=True)
    x2 = np.sum(x * x, axis=-1, keepdims=True)
    y2 = np.sum(y * y, axis=-1, keepdims=True)
    num = (1 + 2 * c * xy + c * y2) * x + (1 - c * x2) * y
    den = 1 + 2 * c * xy + c * c * x2 * y2
    return project_to_ball(num / np.maximum(den, 1e-15), c)


def mobius_neg(x) -> np.ndarray:
    return -(x.coords if isinstance(x, BallPoint) else np.asarray(x, dtype=np.float64))


def _tanh_ratio(a):
    """tanh(a)/a and its derivative divided by a, safe at a = 0."""
    zero = a == 0
    a_nz = np.where(zero, 1.0, a)
    t = np.tanh(a_nz)
    ratio = np.where(zero, 1.0, t / a_nz)
    small = a < _SMALL
    a_big = np.where(small, 1.0, a)
    tb = np.tanh(a_big)
    # (d/da tanh(a)/a) / a
    dratio = np.where(small, -2.0 / 3.0 + 8.0 * a * a / 15.0,
                      (a_big * (1.0 - tb * tb) - tb) / a_big ** 3)
    return ratio, dratio


def _artanh_ratio(a):
    """artanh(a)/a and its derivative divided by a, safe at a = 0."""
    zero = a == 0
    a_nz = np.where(zero, 0.5, a)
    ratio = np.where(zero, 1.0, np.arctanh(a_nz) / a_nz)
    small = a < _SMALL
    a_big = np.where(small, 0.5, a)
    dratio = np.where(small, 2.0 / 3.0 + 4.0 * a * a / 5.0,
                      (a_big / (1.0 - a_big ** 2) - np.arctanh(a_big)) / a_big ** 3)
    return ratio, dratio


def exp_map_0(v, c: float = 1.0, eps: float = EPS) -> np.ndarray:
    """tanh(sqrt(c)|v|) v / (sqrt(c)|v|), mapped 0 -> 0."""
    v = np.asarray(v.coords if isinstance(v, TangentVector) else v, dtype=np.float64)
    sc = np.sqrt(c)
    ratio, _ = _tanh_ratio(sc * _norm(v))
    return project_to_ball(ratio * v, c, eps)


def log_map_0(x, c: float = 1.0, eps: float = EPS) -> np.ndarray:
    """Inverse of :func:`exp_map_0` on the open ball."""
    if isinstance(x, BallPoint):
        x, c = x.coords, x.c
    x = project_to_ball(x, c, eps)
    sc = np.sqrt(c)
    ratio, _ = _artanh_ratio(sc * _norm(x))
    return ratio * x


def exp_map_0_vjp(v, grad, c: float = 1.0, eps: float = EPS) -> np.ndarray:
    """Pull ``grad`` (w.r.t. exp_map_0(v)) back to ``v``; rows are independent."""
    v = np.asarray(v, dtype=np.float64)
    sc = np.sqrt(c)
    r = _norm(v)
    a = sc * r
    ratio, dratio = _tanh_ratio(a)
    limit = (1.0 - eps) / sc
    clipped = ratio * r > limit
    vg = np.sum(v * grad, axis=-1, keepdims=True)
    # y = f(a) v,  dy/dv = f I + f'(a) c v v^T / a
    g = ratio * grad + dratio * c * vg * v
    if np.any(clipped):
        # y = limit * v / |v| on the clipped set (other rows get a dummy radius)
        r_safe = np.where(clipped, r, 1.0)
        g_clip = limit / r_safe * (grad - vg * v / r_safe ** 2)
        g = np.where(clipped, g_clip, g)
    return g


def log_map_0_vjp(x, grad, c: float = 1.0, eps: float = EPS) -> np.ndarray:
    """Pull ``grad`` (w.r.t. log_map_0(x)) back to ``x``."""
    x = np.asarray(x, dtype=np.float64)
    sc = np.sqrt(c)
    r = _norm(x)
    limit = (1.0 - eps) / sc
    xg = np.sum(x * grad, axis=-1, keepdims=True)
    inside = r <= limit
    xp = project_to_ball(x, c, eps)
    ratio, dratio = _artanh_ratio(sc * _norm(xp))
    g = ratio * grad + dratio * c * xg * x
    if not np.all(inside):
        # projection step: x -> limit * x / |x|, then log map at fixed radius
        r_safe = np.where(inside, 1.0, r)
        gp = ratio * grad + dratio * c * np.sum(xp * grad, axis=-1, keepdims=True) * xp
        gpx = np.sum(x * gp, axis=-1, keepdims=True)
        g_out = limit / r_safe * (gp - gpx * x / r_safe ** 2)
        g = np.where(inside, g, g_out)
    return g


def ball_distance(x, y, c: float = 1.0) -> np.ndarray:
    """Geodesic distance (2/sqrt(c)) artanh(sqrt(c) |(-x) + y|)."""
    x, y, c = _coords(x, y, c)
    diff = mobius_add(-x, y, c)
    sc = np.sqrt(c)
    a = np.minimum(sc * np.linalg.norm(diff, axis=-1), 1.0 - EPS)
    return 2.0 / sc * np.arctanh(a)


def clip_norm(v, max_norm: float) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = _norm(v)
    return v * np.where(norm > max_norm, max_norm / np.maximum(norm, 1e-300), 1.0)


def clip_norm_vjp(v, grad, max_norm: float) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    r = _norm(v)
    over = r > max_norm
    if not np.any(over):
        return grad
    r_safe = np.where(over, r, 1.0)
    vg = np.sum(v * grad, axis=-1, keepdims=True)
    g_clip = max_norm / r_safe * (grad - vg * v / r_safe ** 2)
    return np.where(over, g_clip, grad)
