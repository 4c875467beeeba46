"""
Weak envelopes, dwell time and switching
========================================

A weak envelope ``K exp(-lambda (t - s))`` ignores how many impulses occur.
On sequences with at most ``N0 + (t - s)/tauD`` impulses in any window it
can be traded for a strong one with rate ``tauD/(1 + tauD) lambda``, which
in turn feeds the certificate formulas.  A two-mode switched system is
handled the same way once it is cast to a single impulsive system.
"""

import math

from impulsive_iss import (
    Certificate,
    DwellClass,
    SwitchedSystem,
    SwitchingSignal,
    ThresholdError,
    adt_strengthen,
    cast_to_gswl,
    check_dwell_class,
    simulate,
    switched_certify,
)

weak = Certificate(1.0, 1.0, "weak")
cls = DwellClass(2, 1.0)
strong = adt_strengthen(weak, cls)
print(f"strengthened: K = {strong.K:.6f} (e = {math.e:.6f}), lambda = {strong.lam:.6f}")
print(f"admissible constant perturbation: Nbar < {strong.lam / (strong.K * math.exp(strong.lam)):.6f}")

# Mode 1 decays at rate 1, mode 2 at rate 2; entering mode 2 halves the state.
sw = SwitchedSystem(1, 1, 2, A={1: [[-1.0]], 2: [[-2.0]]},
                    R={(1, 2): [[0.5]], (2, 1): [[1.0]]}, N={1: 0.05, 2: 0.05}, c=1.0)
nu = SwitchingSignal(1, [(0.5, 2), (1.5, 1), (2.5, 2)], horizon=3.0)
print(f"signal in the dwell class: {check_dwell_class(nu.sequence, cls).ok}")

traj = simulate(cast_to_gswl(sw, nu), 0.0, [1.0], None, 3.0, 1e-3)
print(f"x(3) = {traj.final[0]:.10f}, hand composition 0.25 e^-4.5 = {0.25 * math.exp(-4.5):.10f}")

report = switched_certify(sw, cls, weak)
print(f"route: {report.route}")
print(f"gain coefficient L = {report.gain_coeff:.6f}")

# Too large a perturbation level is refused with the violated inequality.
try:
    switched_certify(SwitchedSystem(1, 1, 2, A=sw.A, R=sw.R, N={1: 0.2, 2: 0.2}), cls, weak)
except ThresholdError as exc:
    print(f"refused: {exc}")
