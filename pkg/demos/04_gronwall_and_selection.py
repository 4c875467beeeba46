"""
Two tools behind the certificates
=================================

The impulsive Gronwall inequality bounds ``y`` by
``p(t) exp(int a) prod (1 + b)`` whenever
``y <= p + int a y + sum b y(s^-)``.  The equality case is the tightest one,
so checking it is a useful stress test.  The matrix selection rewrites a
bounded nonlinear term ``g`` as ``B x`` plus a bounded remainder.
"""

import numpy as np

from impulsive_iss import ImpulseSequence, construct_selection, gronwall_check

a, b = 0.4, 0.3
seq = ImpulseSequence([0.7, 1.3, 2.2], 3.0)


def y_equality(t):
    # exact solution of y' = a y + 0.5 with y(0) = 1 and y <- (1 + b) y at impulses
    y, cur = 1.0, 0.0
    flow = lambda y, dt: (y + 0.5 / a) * np.exp(a * dt) - 0.5 / a  # noqa: E731
    for tau in seq.times:
        if tau <= t:
            y, cur = (1.0 + b) * flow(y, tau - cur), tau
    return flow(y, t - cur)


chk = gronwall_check(lambda t: 1.0 + 0.5 * t, lambda t: a, lambda t: b, seq, y_equality, 0.0, 3.0)
print(f"Gronwall bound holds: {chk.passed}, worst margin {chk.worst_margin:.3e}, "
      f"hypothesis holds: {chk.extras['hypothesis_holds']}")

rng = np.random.default_rng(1)
x, g = rng.normal(size=5), rng.normal(size=5)
Ncap = 0.5
hcap = max(0.0, np.linalg.norm(g) - Ncap * np.linalg.norm(x))
B = construct_selection(g, x, Ncap, hcap)
print(f"||B|| = {np.linalg.norm(B, 2):.6f} <= {Ncap}, |g - Bx| = {np.linalg.norm(g - B @ x):.6f} <= {hcap:.6f}")
