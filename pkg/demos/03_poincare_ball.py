"""
Working in the Poincare ball
============================

Exponential and logarithmic maps at the origin, Mobius addition and the
geodesic distance, plus the distance-to-origin diagnostic for embeddings.
"""

import numpy as np

from leadwarn.hyperbolic import ball_distance, exp_map_0, log_map_0, mobius_add, mobius_neg

v = np.array([0.3, 0.4])
x = exp_map_0(v)
print("|v| = 0.5 maps to |x| =", np.linalg.norm(x), "= tanh(0.5) =", np.tanh(0.5))
print("log map recovers v:", log_map_0(x))

y = exp_map_0(np.array([-1.0, 2.0]))
print("x (+) (-x) =", mobius_add(x, mobius_neg(x)))
half = np.array([0.5, 0.0])
print("d(0, (0.5, 0)) =", ball_distance(np.zeros(2), half), " 2 artanh(0.5) =", 2 * np.arctanh(0.5))
print("d(x, y) =", ball_distance(x, y))

# tangent vectors of growing norm pile up near the boundary while their
# distance from the origin keeps growing linearly
for r in (0.5, 1, 2, 4, 6):
    p = exp_map_0(np.array([r, 0.0]))
    print(f"|v| {r:>3}: |x| {np.linalg.norm(p):.6f}  d(0,x) {float(ball_distance(np.zeros(2), p)):.4f}")

# smaller curvature flattens the ball towards Euclidean addition
a, b = np.array([0.2, 0.1]), np.array([0.05, -0.3])
for c in (1.0, 1e-2, 1e-8):
    print("c", c, "mobius", mobius_add(a, b, c), "euclid", a + b)
