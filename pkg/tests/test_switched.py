import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from impulsive_iss.certificates import certify
from impulsive_iss.errors import ArgumentError, ConfigurationError, PreconditionError, ThresholdError
from impulsive_iss.gswl import GswlSystem, PerturbationBound, simulate
from impulsive_iss.linear_core import STRONG, WEAK, Certificate
from impulsive_iss.switched import (
    ROUTE_DWELL,
    ROUTE_GENERAL,
    ROUTE_STRONG,
    SwitchedSystem,
    SwitchingSignal,
    cast_to_gswl,
    switched_certify,
)
from impulsive_iss.timebase import DwellClass, ImpulseSequence, InputSignal, KFunction


def two_modes(reset=1.0, N=None):
    return SwitchedSystem(1, 1, 2, A={1: [[-1.0]], 2: [[-2.0]]},
                          R={(1, 2): [[reset]], (2, 1): [[1.0]]}, N=N or {}, M=0.0, c=1.0)


class TestCast:
    def test_piecewise_exponential(self):
        sys = cast_to_gswl(two_modes(), SwitchingSignal(1, [(1.0, 2)], 2.0))
        assert simulate(sys, 0.0, [1.0], None, 2.0, 1e-3).final[0] == pytest.approx(math.exp(-3.0), abs=1e-7)

    def test_with_reset(self):
        sys = cast_to_gswl(two_modes(0.5), SwitchingSignal(1, [(1.0, 2)], 2.0))
        assert simulate(sys, 0.0, [1.0], None, 2.0, 1e-3).final[0] == pytest.approx(0.5 * math.exp(-3.0), abs=1e-7)

    def test_sequence_is_switch_set(self):
        nu = SwitchingSignal(1, [(0.5, 2), (1.25, 1), (3.0, 2)], 4.0)
        assert cast_to_gswl(two_modes(), nu).seq.times == (0.5, 1.25, 3.0)

    def test_single_mode_identity(self):
        sw = SwitchedSystem(1, 1, 1, flows={1: lambda t, x, u: -x + u}, A={1: [[-1.0]]})
        sys = cast_to_gswl(sw, SwitchingSignal(1, [], 3.0))
        assert sys.seq.times == ()
        direct = GswlSystem(1, 1, ImpulseSequence([], 3.0), f=lambda t, x, u: -x + u, g=lambda t, x, u: x)
        u = InputSignal.constant([0.3])
        a = simulate(sys, 0.0, [1.0], u, 3.0, 0.01)
        b = simulate(direct, 0.0, [1.0], u, 3.0, 0.01)
        assert np.array_equal(a.x, b.x)

    def test_missing_reset(self):
        sw = SwitchedSystem(1, 1, 3, A={1: [[-1.0]], 2: [[-1.0]], 3: [[-1.0]]}, R={(1, 2): [[1.0]]})
        with pytest.raises(ConfigurationError, match="2->3"):
            cast_to_gswl(sw, SwitchingSignal(1, [(1.0, 2), (2.0, 3)], 3.0))

    def test_same_mode_rejected(self):
        with pytest.raises(ArgumentError):
            SwitchingSignal(1, [(1.0, 1)])
        with pytest.raises(ArgumentError):
            SwitchingSignal(1, [(1.0, 2), (1.0, 1)])

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2 ** 31))
    def test_matches_direct_piecewise_simulation(self, seed):
        rng = np.random.default_rng(seed)
        a1, a2 = rng.uniform(-2, 0.5, 2)
        r12, r21 = rng.uniform(-1.5, 1.5, 2)
        b = rng.uniform(-1, 1)
        sw = SwitchedSystem(1, 1, 2,
                            flows={1: lambda t, x, u: a1 * x + np.sin(x) * u,
                                   2: lambda t, x, u: a2 * x + b * u},
                            resets={(1, 2): lambda t, x, u: r12 * x + u, (2, 1): lambda t, x, u: r21 * x})
        times = np.cumsum(rng.uniform(0.2, 1.0, 4))
        modes = [2, 1, 2, 1]
        nu = SwitchingSignal(1, list(zip(times, modes)), float(times[-1] + 0.5))
        u = InputSignal.constant([0.2])
        step = 0.01
        stitched = simulate(cast_to_gswl(sw, nu), 0.0, [0.7], u, nu.horizon, step).final

        x, cur, mode = np.array([0.7]), 0.0, 1
        knots = list(times) + [nu.horizon]
        for k, t_next in enumerate(knots):
            seg = GswlSystem(1, 1, ImpulseSequence([], nu.horizon), f=sw.flow(mode), g=lambda t, x, u: x)
            x = simulate(seg, cur, x, u, t_next, step).final
            if k < len(times):
                new = modes[k]
                x = sw.reset((mode, new))(t_next, x, u(t_next))
                mode = new
            cur = t_next
        np.testing.assert_allclose(stitched, x, atol=1e-9)


class TestCertify:
    def test_one_signal_bit_for_bit(self):
        sw = SwitchedSystem(1, 1, 1, A={1: [[-1.0]]}, N={1: 0.1}, M=1.0, c=1.0)
        cert = Certificate(1.0, 1.0, STRONG)
        rep = switched_certify(sw, [SwitchingSignal(1, [], 5.0)], cert, chosen_R=0.2)
        ref = certify(cert, PerturbationBound(Nbar=0.1, M=1.0, c=1.0, eta=KFunction.identity()), chosen_R=0.2)
        assert rep.constants() == ref.constants()
        assert rep.route == ROUTE_STRONG

    def test_dwell_threshold(self):
        weak = Certificate(1.0, 1.0, WEAK)
        sw = two_modes(N={1: 0.05, 2: 0.05})
        rep = switched_certify(sw, DwellClass(2, 1.0), weak)
        assert rep.route == ROUTE_DWELL
        assert rep.certificate.lam == pytest.approx(0.5, rel=1e-12)
        assert rep.certificate.K == pytest.approx(math.e, rel=1e-12)
        threshold = 0.5 * math.exp(-1.5)
        assert threshold == pytest.approx(0.111565, abs=1e-6)
        with pytest.raises(ThresholdError) as info:
            switched_certify(two_modes(N={1: 0.2, 2: 0.2}), DwellClass(2, 1.0), weak)
        assert info.value.bound == pytest.approx(threshold, rel=1e-12)
        assert "lambda~" in str(info.value)

    def test_weak_needs_dwell(self):
        with pytest.raises(PreconditionError):
            switched_certify(two_modes(), [SwitchingSignal(1, [(1.0, 2)], 2.0)], Certificate(1.0, 1.0, WEAK))

    def test_signal_outside_dwell_class(self):
        nu = SwitchingSignal(1, [(0.1, 2), (0.2, 1), (0.3, 2)], 1.0)
        with pytest.raises(PreconditionError):
            switched_certify(two_modes(), [nu], Certificate(1.0, 1.0, WEAK), dwell_class=DwellClass(1, 1.0))

    def test_time_varying_budgets(self):
        sw = two_modes(N={1: lambda t: math.exp(-t), 2: 0.0})
        nu = SwitchingSignal(1, [(1.0, 2)], 3.0)
        rep = switched_certify(sw, [nu], Certificate(1.0, 1.0, STRONG), theta_grid_step=1e-3)
        assert rep.route == ROUTE_GENERAL
        assert rep.theta_c == pytest.approx(1.0 - math.exp(-1.0), abs=1e-6)

    def test_fitted_family(self):
        signals = [SwitchingSignal(1, [(1.0, 2), (2.0, 1)], 3.0), SwitchingSignal(1, [(0.5, 2)], 3.0)]
        rep = switched_certify(two_modes(0.5), signals, "fit")
        assert rep.certificate.lam > 0
        assert any("explicit signal" in n for n in rep.notes)
