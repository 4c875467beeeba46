"""
Jumps that look harmless but are not
====================================

``x' = -x`` between impulses and ``x <- (1 + delta) x`` at the impulses
``tau_1 = 1, tau_{k+1} = tau_k + 1/k``.  The gaps shrink like the harmonic
series, so the flow has less and less time to undo each jump.  For
``delta = 0`` the state simply decays; for any ``delta > 0`` the per-jump
factor ``(1 + delta) e^{-1/k}`` eventually exceeds one.
"""

import math

import numpy as np

from impulsive_iss import example1_divergence

# The unperturbed system decays exactly like exp(-(t - 1)).
flat = example1_divergence(0.0, 100)
err = np.max(np.abs(flat.trajectory.x[:, 0] - np.exp(-(flat.trajectory.t - 1.0))))
print(f"delta = 0    : x(end) = {flat.ratio:.6e}, max deviation from e^-(t-1) = {err:.1e}")

# A ten percent jump is enough to turn decay into growth.
for delta in (0.05, 0.1, 0.2):
    res = example1_divergence(delta, 100)
    print(f"delta = {delta:<5}: x(end) = {res.ratio:10.4f}, factor exceeds 1 from k = {res.first_growth_k}")

# Closed form for delta = 0.1: 1.1^100 exp(-H_100).
harmonic = sum(1.0 / k for k in range(1, 101))
print(f"closed form  : 1.1^100 exp(-H_100) = {1.1 ** 100 * math.exp(-harmonic):.4f}")

# The transition matrix of the linear part has norm one on the impulse
# instants, so no strong exponential envelope can exist for this sequence,
# and the growth above does not contradict any certificate.
