import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from impulsive_iss.certificates import (
    adt_strengthen,
    admissible_nbar,
    certify,
    iiss_certificate,
    iss_small_input,
    iss_unrestricted,
    local_linearization,
    perturbed_envelope,
)
from impulsive_iss.errors import ArgumentError, PreconditionError, ThresholdError, WrongVariantError
from impulsive_iss.gswl import GswlSystem, PerturbationBound
from impulsive_iss.linear_core import STRONG, WEAK, Certificate
from impulsive_iss.timebase import DwellClass, ImpulseSequence, KFunction
from oracles import certificate_numbers

REL = 1e-12
UNIT = Certificate(1.0, 1.0, STRONG)


def bound(Nbar=0.0, M=0.0, c=1.0):
    return PerturbationBound(Nbar=Nbar, M=M, c=c, eta=KFunction.identity())


class TestWorkedNumbers:
    def test_perturbed(self):
        hat_K, hat_lam = perturbed_envelope(UNIT, 0.1)
        assert hat_lam == pytest.approx(1.0 - 0.1 * math.e, rel=REL)
        assert hat_lam == pytest.approx(0.728172, abs=1e-6)
        assert hat_K == 1.0

    def test_small_input(self):
        rep = iss_small_input(UNIT, bound(0.1, 1.0, 1.0), chosen_R=0.2)
        ref = certificate_numbers(1.0, 1.0, 0.1, 1.0, 1.0, chosen_R=0.2)
        assert rep.R_max == pytest.approx(ref["R_max"], rel=REL)
        assert rep.R_max == pytest.approx(0.267879, abs=1e-6)
        assert rep.bar_lambda == pytest.approx(ref["bar_lambda"], rel=REL)
        assert rep.gain_coeff == pytest.approx(ref["gain_coeff"], rel=REL)
        assert rep.gain_coeff == pytest.approx(11.354568, abs=1e-6)

    def test_iiss(self):
        rep = iiss_certificate(UNIT, bound(0.1, 1.0, 1.0))
        ref = certificate_numbers(1.0, 1.0, 0.1, 1.0, 1.0)
        assert rep.iiss.kappa == pytest.approx(ref["kappa"], rel=REL)
        assert rep.iiss.rho_coeff == pytest.approx(ref["rho_coeff"], rel=REL)
        assert rep.iiss.beta(0.0, 3.0) == 0.0
        assert float(rep.iiss.rho(0.5)) == pytest.approx(math.expm1(ref["rho_coeff"] * 0.5), rel=REL)

    def test_unrestricted(self):
        rep = iss_unrestricted(UNIT, bound(0.0, 0.0, 1.0))
        assert rep.gain_coeff == pytest.approx(1.0 + 1.0 / (1.0 - math.exp(-1.0)), rel=REL)
        assert rep.bar_K == rep.hat_K and rep.bar_lambda == rep.hat_lambda

    def test_unrestricted_perturbed(self):
        # straight-line value 6.61351 (K=1, lambda=1, Nbar=0.1, c=2)
        rep = iss_unrestricted(UNIT, bound(0.1, 0.0, 2.0))
        ref = certificate_numbers(1.0, 1.0, 0.1, 0.0, 2.0)
        assert rep.gain_coeff == pytest.approx(ref["gain_coeff"], rel=REL)
        assert rep.gain_coeff == pytest.approx(6.61351, abs=1e-5)

    def test_theta_budget_overshoot(self):
        hat_K, _ = perturbed_envelope(UNIT, 0.0, theta_c=0.5, theta_d=0.25)
        assert hat_K == pytest.approx(math.exp(0.5 + math.e * 0.25), rel=REL)

    @settings(max_examples=60, deadline=None)
    @given(K=st.floats(1.0, 5.0), lam=st.floats(0.05, 3.0), frac=st.floats(0.0, 0.95),
           M=st.floats(0.01, 3.0), c=st.floats(0.0, 3.0), tc=st.floats(0.0, 1.0), td=st.floats(0.0, 1.0))
    def test_random_against_oracle(self, K, lam, frac, M, c, tc, td):
        cert = Certificate(K, lam, STRONG)
        Nbar = frac * admissible_nbar(cert)
        rep = certify(cert, bound(Nbar, M, c), tc, td)
        ref = certificate_numbers(K, lam, Nbar, M, c, tc, td)
        for key in ("hat_K", "hat_lambda", "R_max", "bar_lambda", "bar_K", "gain_coeff"):
            assert getattr(rep, key) == pytest.approx(ref[key], rel=1e-12, abs=1e-15), key
        assert rep.iiss.kappa == pytest.approx(ref["kappa"], rel=1e-12)
        assert rep.iiss.rho_coeff == pytest.approx(ref["rho_coeff"], rel=1e-12)


class TestBoundaries:
    def test_nbar_threshold(self):
        limit = 1.0 / math.e
        perturbed_envelope(UNIT, limit - 1e-12)
        with pytest.raises(ThresholdError) as info:
            perturbed_envelope(UNIT, limit + 1e-12)
        assert "0.367879" in str(info.value)
        with pytest.raises(ThresholdError):
            perturbed_envelope(UNIT, 0.4)

    def test_chosen_R_threshold(self):
        R_max = (1.0 - 0.1 * math.e) / math.e
        rep = iss_small_input(UNIT, bound(0.1, 1.0, 1.0), chosen_R=R_max - 1e-12)
        assert rep.bar_lambda > 0
        with pytest.raises(ThresholdError):
            iss_small_input(UNIT, bound(0.1, 1.0, 1.0), chosen_R=R_max + 1e-12)

    def test_default_chosen_R(self):
        rep = iss_small_input(UNIT, bound(0.1, 1.0, 1.0))
        assert rep.chosen_R == pytest.approx(0.9 * rep.R_max, rel=REL)

    def test_saturating_eta_needs_radius(self):
        b = PerturbationBound(Nbar=0.0, M=1.0, c=1.0, eta=KFunction.saturating(0.1))
        with pytest.raises(ArgumentError):
            iss_small_input(UNIT, b)
        assert iss_small_input(UNIT, b, chosen_R=50.0).R_max == math.inf

    def test_wrong_variants(self):
        with pytest.raises(WrongVariantError):
            iss_small_input(UNIT, bound(0.0, 0.0))
        with pytest.raises(WrongVariantError):
            iss_unrestricted(UNIT, bound(0.0, 1.0))
        with pytest.raises(WrongVariantError):
            perturbed_envelope(Certificate(1.0, 1.0, WEAK), 0.0)
        with pytest.raises(ArgumentError):
            adt_strengthen(UNIT, DwellClass(1, 1.0))


class TestMonotonicity:
    def test_rate_decreases_with_nbar(self):
        rates = [perturbed_envelope(UNIT, nb)[1] for nb in np.linspace(0, 0.36, 10)]
        assert np.all(np.diff(rates) < 0)

    def test_gain_increases_with_R(self):
        gains = [iss_small_input(UNIT, bound(0.1, 1.0, 1.0), chosen_R=r).gain_coeff
                 for r in np.linspace(0.01, 0.26, 10)]
        assert np.all(np.diff(gains) > 0)

    def test_overshoot_increases_with_budget(self):
        ks = [perturbed_envelope(UNIT, 0.0, theta_c=tc)[0] for tc in np.linspace(0, 2, 10)]
        assert np.all(np.diff(ks) > 0)


class TestDwell:
    def test_examples(self):
        out = adt_strengthen(Certificate(1.0, 1.0, WEAK), DwellClass(1, 1.0))
        assert out.flavor == STRONG
        assert out.lam == pytest.approx(0.5, rel=REL)
        assert out.K == pytest.approx(math.exp(0.5), rel=REL)
        out = adt_strengthen(Certificate(1.0, 1.0, WEAK), DwellClass(2, 1.0))
        assert out.K == pytest.approx(math.e, rel=REL)
        out = adt_strengthen(Certificate(2.0, 2.0, WEAK), DwellClass(1, 1.0))
        assert (out.lam, out.K) == (pytest.approx(1.0, rel=REL), pytest.approx(2 * math.e, rel=REL))

    def test_large_dwell_recovers_rate(self):
        out = adt_strengthen(Certificate(1.0, 1.0, WEAK), DwellClass(1, 1e6))
        assert out.lam == pytest.approx(1.0, rel=1e-5)
        assert "N0=1" in out.provenance


def local_system(f, g, A=None, R=None):
    return GswlSystem(1, 1, ImpulseSequence([1.0, 2.0], 3.0), f=f, g=g, A=A, R=R)


class TestLocal:
    def test_quadratic_remainder(self):
        sys = local_system(lambda t, x, u: -x + x ** 2, lambda t, x, u: 0.5 * x)
        rep = local_linearization(sys, UNIT, radius_probe=1.0, sample_count=200)
        eps = 1.0 / (2.0 * math.e)
        assert rep.epsilon == pytest.approx(0.183940, abs=1e-6)
        assert rep.r == pytest.approx(eps, abs=2e-4)
        assert rep.local_rate == pytest.approx(0.5, rel=1e-12)

    def test_linear_returns_probe(self):
        sys = local_system(lambda t, x, u: -x, lambda t, x, u: 0.5 * x, A=[[-1.0]], R=[[0.5]])
        assert local_linearization(sys, UNIT, radius_probe=3.0).r == 3.0

    def test_not_equilibrium(self):
        sys = local_system(lambda t, x, u: -x + 1.0, lambda t, x, u: x)
        with pytest.raises(PreconditionError):
            local_linearization(sys, UNIT, radius_probe=1.0)


def test_report_serialisation():
    rep = certify(UNIT, bound(0.1, 1.0, 1.0), chosen_R=0.2)
    d = rep.to_dict()
    assert d["variant"].startswith("S-0-GUES")
    for key, entry in d["constants"].items():
        assert entry["formula"], key
    assert d["constants"]["gain_coeff"]["value"] == pytest.approx(11.354568, abs=1e-6)
