"""Closed-form stability certificates built from an exponential envelope.

Every function here is plain arithmetic on ``(K, lambda)``, the perturbation
bound constants and the vanishing budgets ``Theta_c`` (flow) and ``Theta_d``
(jumps).  Each number placed in an :class:`IssReport` carries the formula it
came from in ``provenance``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ArgumentError, PreconditionError, ThresholdError, WrongVariantError
from .gswl import GswlSystem, PerturbationBound
from .linear_core import STRONG, WEAK, Certificate, MatrixFunction
from .timebase import DwellClass

__all__ = [
    "IssReport",
    "IissPart",
    "LocalStabilityReport",
    "admissible_nbar",
    "perturbed_envelope",
    "iss_small_input",
    "iss_unrestricted",
    "iiss_certificate",
    "certify",
    "adt_strengthen",
    "local_linearization",
]

# The overshoot K*exp(K*(Theta_c + e^lam*Theta_d)) is used everywhere.  A variant without the
# K in front of e^lam*Theta_d is smaller for K >= 1, so this choice never understates the envelope.
OVERSHOOT_NOTE = (
    "overshoot uses K*exp(K*(Theta_c + e^lam*Theta_d)) for both the perturbed and the "
    "small-input envelope (the larger of the two possible forms)"
)


@dataclass
class IissPart:
    beta_scale: float
    beta_rate: float
    kappa: float
    rho_coeff: float

    def beta(self, r, s):
        """``zeta(beta_scale * exp(-beta_rate * s) * r)`` with ``zeta(r) = e^r - 1``."""
        return np.expm1(self.beta_scale * np.exp(-self.beta_rate * np.asarray(s, dtype=float)) * np.asarray(r, dtype=float))

    def rho(self, r):
        """``zeta(rho_coeff * r)``."""
        return np.expm1(self.rho_coeff * np.asarray(r, dtype=float))


@dataclass
class IssReport:
    """Derived constants of the (i)ISS certificate.

    ``bar_K``, ``bar_lambda`` and ``gain_coeff`` describe the ISS bound
    ``|x(t)| <= bar_K |x0| exp(-bar_lambda d) + gain_coeff * eta(||u||_inf)``;
    ``iiss`` the integral bound ``|x(t)| <= beta(|x0|, d) + rho(||u||_{sigma,eta})``.
    """

    certificate: Certificate
    bound: PerturbationBound
    theta_c: float
    theta_d: float
    hat_K: float
    hat_lambda: float
    variant: str = ""
    R_max: Optional[float] = None
    chosen_R: Optional[float] = None
    bar_K: Optional[float] = None
    bar_lambda: Optional[float] = None
    gain_coeff: Optional[float] = None
    iiss: Optional[IissPart] = None
    provenance: Dict[str, str] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)
    route: str = "strong envelope"

    @property
    def has_iss(self) -> bool:
        return self.gain_coeff is not None

    def beta(self, r, s):
        return self.bar_K * np.asarray(r, dtype=float) * np.exp(-self.bar_lambda * np.asarray(s, dtype=float))

    def gamma(self, s):
        return self.gain_coeff * np.asarray(self.bound.eta(np.asarray(s, dtype=float)))

    def constants(self) -> Dict[str, float]:
        """Every numeric constant, keyed like ``provenance``."""
        out = {
            "K": self.certificate.K,
            "lambda": self.certificate.lam,
            "Nbar": self.bound.Nbar,
            "M": self.bound.M,
            "c": self.bound.c,
            "Theta_c": self.theta_c,
            "Theta_d": self.theta_d,
            "hat_K": self.hat_K,
            "hat_lambda": self.hat_lambda,
        }
        for key in ("R_max", "chosen_R", "bar_K", "bar_lambda", "gain_coeff"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.iiss is not None:
            out.update({f"iiss_{k}": v for k, v in asdict(self.iiss).items()})
        return out

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "route": self.route,
            "certificate": {"K": self.certificate.K, "lambda": self.certificate.lam,
                            "flavor": self.certificate.flavor,
                            "provenance": self.certificate.provenance},
            "eta": {"kind": self.bound.eta.kind, "param": self.bound.eta.param},
            "constants": {k: {"value": v, "formula": self.provenance.get(k, "input")}
                          for k, v in self.constants().items()},
            "notes": list(self.notes),
        }


_INPUT_PROVENANCE = {
    "K": "input: envelope overshoot",
    "lambda": "input: envelope decay rate",
    "Nbar": "input: constant part of N(t)",
    "M": "input: state-input coupling constant",
    "c": "input: additive input constant",
    "Theta_c": "input: int theta(s) ds budget",
    "Theta_d": "input: sum theta(tau) budget",
}


def _require_strong(cert: Certificate) -> None:
    if cert.flavor != STRONG:
        raise WrongVariantError("this formula needs a strong envelope; strengthen a weak one with adt_strengthen")


def admissible_nbar(cert: Certificate) -> float:
    """Largest admissible constant perturbation level ``lambda / (K e^lambda)`` (exclusive)."""
    return cert.lam / (cert.K * math.exp(cert.lam))


def perturbed_envelope(cert: Certificate, Nbar: float, theta_c: float = 0.0,
                       theta_d: float = 0.0) -> Tuple[float, float]:
    """Envelope ``(hat_K, hat_lambda)`` of the linear part after a bounded matrix perturbation.

    ``hat_lambda = lambda - K e^lambda Nbar`` and
    ``hat_K = K exp(K (Theta_c + e^lambda Theta_d))``.
    Requires ``Nbar < lambda / (K e^lambda)``.
    """
    _require_strong(cert)
    if Nbar < 0 or theta_c < 0 or theta_d < 0:
        raise ArgumentError("Nbar and the theta budgets must be nonnegative")
    K, lam = cert.K, cert.lam
    limit = admissible_nbar(cert)
    if not Nbar < limit:
        raise ThresholdError("Nbar", Nbar, limit, "Nbar < lambda/(K*e^lambda)")
    hat_lambda = lam - K * math.exp(lam) * Nbar
    hat_K = K * math.exp(K * (theta_c + math.exp(lam) * theta_d))
    return hat_K, hat_lambda


def _base_report(cert, bound, theta_c, theta_d) -> IssReport:
    hat_K, hat_lambda = perturbed_envelope(cert, bound.Nbar, theta_c, theta_d)
    prov = dict(_INPUT_PROVENANCE)
    prov["hat_lambda"] = "hat_lambda = lambda - K*e^lambda*Nbar"
    prov["hat_K"] = "hat_K = K*exp(K*(Theta_c + e^lambda*Theta_d))"
    return IssReport(cert, bound, float(theta_c), float(theta_d), hat_K, hat_lambda,
                     provenance=prov, notes=[OVERSHOOT_NOTE])


def _gain(K_env: float, rate: float, c: float) -> float:
    return K_env * c * (1.0 / rate + 1.0 / (-math.expm1(-rate)))


def iss_small_input(cert: Certificate, bound: PerturbationBound, theta_c: float = 0.0,
                    theta_d: float = 0.0, chosen_R: Optional[float] = None) -> IssReport:
    """ISS under inputs with ``||u||_inf <= chosen_R`` (requires ``M > 0``).

    ``R_max = eta^{-1}((lambda - Nbar K e^lambda) / (K M e^lambda))``;
    ``chosen_R`` defaults to ``0.9 R_max`` and must satisfy ``chosen_R < R_max``.
    """
    if not bound.M > 0:
        raise WrongVariantError("M = 0: use iss_unrestricted")
    report = _base_report(cert, bound, theta_c, theta_d)
    K, lam, Nbar, M = cert.K, cert.lam, bound.Nbar, bound.M
    e_lam = math.exp(lam)
    level = (lam - Nbar * K * e_lam) / (K * M * e_lam)
    R_max = bound.eta.inverse(level) if level < bound.eta.sup else math.inf
    if chosen_R is None:
        if math.isinf(R_max):
            raise ArgumentError("eta saturates below the threshold level; R_max is unbounded, pass chosen_R")
        chosen_R = 0.9 * R_max
    if not chosen_R > 0:
        raise ArgumentError(f"chosen_R must be positive, got {chosen_R}")
    if not chosen_R < R_max:
        raise ThresholdError("chosen_R", chosen_R, R_max,
                             "R < eta^-1((lambda - Nbar*K*e^lambda)/(K*M*e^lambda))")
    bar_lambda = lam - K * e_lam * (Nbar + M * float(bound.eta(chosen_R)))
    if not bar_lambda > 0:
        raise ThresholdError("chosen_R", chosen_R, R_max,
                             "R < eta^-1((lambda - Nbar*K*e^lambda)/(K*M*e^lambda))")
    bar_K = K * math.exp(K * (theta_c + e_lam * theta_d))
    report.variant = "S-ISS s.i."
    report.R_max = R_max
    report.chosen_R = float(chosen_R)
    report.bar_lambda = bar_lambda
    report.bar_K = bar_K
    report.gain_coeff = _gain(bar_K, bar_lambda, bound.c)
    report.provenance.update({
        "R_max": "R_max = eta^-1((lambda - Nbar*K*e^lambda)/(K*M*e^lambda))",
        "chosen_R": "chosen_R = 0.9*R_max (default) or user value, chosen_R < R_max",
        "bar_lambda": "bar_lambda = lambda - K*e^lambda*(Nbar + M*eta(chosen_R))",
        "bar_K": "bar_K = K*exp(K*(Theta_c + e^lambda*Theta_d))",
        "gain_coeff": "L = bar_K*c*(1/bar_lambda + 1/(1 - e^-bar_lambda)), gamma(s) = L*eta(s)",
    })
    return report


def iss_unrestricted(cert: Certificate, bound: PerturbationBound, theta_c: float = 0.0,
                     theta_d: float = 0.0) -> IssReport:
    """ISS for all inputs when ``M = 0``; the envelope is the perturbed one unchanged."""
    if bound.M != 0:
        raise WrongVariantError("M > 0: use iss_small_input")
    report = _base_report(cert, bound, theta_c, theta_d)
    report.variant = "S-ISS"
    report.bar_K = report.hat_K
    report.bar_lambda = report.hat_lambda
    report.gain_coeff = _gain(report.hat_K, report.hat_lambda, bound.c)
    report.provenance.update({
        "bar_lambda": "bar_lambda = hat_lambda (M = 0)",
        "bar_K": "bar_K = hat_K (M = 0)",
        "gain_coeff": "L = hat_K*c*(1/hat_lambda + 1/(1 - e^-hat_lambda)), gamma(s) = L*eta(s)",
    })
    report.notes.append("M = 0: the input-dependent Gronwall factor vanishes, so bar_* = hat_*")
    return report


def iiss_certificate(cert: Certificate, bound: PerturbationBound, theta_c: float = 0.0,
                     theta_d: float = 0.0) -> IssReport:
    """Integral-ISS bound with ``kappa = e^hat_lambda hat_K M``.

    ``beta(r, s) = exp(2 hat_K e^{-hat_lambda s} r) - 1`` and
    ``rho(r) = exp(2 (c hat_K + kappa) r) - 1``, applied to ``||u||_{sigma,eta}``.
    """
    report = _base_report(cert, bound, theta_c, theta_d)
    kappa = math.exp(report.hat_lambda) * report.hat_K * bound.M
    report.iiss = IissPart(
        beta_scale=2.0 * report.hat_K,
        beta_rate=report.hat_lambda,
        kappa=kappa,
        rho_coeff=2.0 * (bound.c * report.hat_K + kappa),
    )
    report.variant = "S-iISS"
    report.provenance.update({
        "iiss_beta_scale": "beta(r,s) = exp(2*hat_K*e^(-hat_lambda*s)*r) - 1; scale = 2*hat_K",
        "iiss_beta_rate": "beta rate = hat_lambda",
        "iiss_kappa": "kappa = e^hat_lambda*hat_K*M",
        "iiss_rho_coeff": "rho(r) = exp(2*(c*hat_K + kappa)*r) - 1; coeff = 2*(c*hat_K + kappa)",
    })
    return report


def certify(cert: Certificate, bound: PerturbationBound, theta_c: float = 0.0,
            theta_d: float = 0.0, chosen_R: Optional[float] = None) -> IssReport:
    """Integral-ISS part plus the ISS part matching ``M`` (small-input if ``M > 0``)."""
    iiss = iiss_certificate(cert, bound, theta_c, theta_d)
    if bound.M > 0:
        iss = iss_small_input(cert, bound, theta_c, theta_d, chosen_R)
    else:
        iss = iss_unrestricted(cert, bound, theta_c, theta_d)
    iss.iiss = iiss.iiss
    iss.provenance.update({k: v for k, v in iiss.provenance.items() if k.startswith("iiss_")})
    iss.variant = f"S-0-GUES, S-iISS, {iss.variant}"
    return iss


def adt_strengthen(cert: Certificate, cls: DwellClass) -> Certificate:
    """Turn a weak envelope into a strong one on sequences with average dwell time.

    ``lambda~ = tauD/(1 + tauD) * lambda`` and ``K~ = K e^{N0 lambda~}``.
    """
    if cert.flavor != WEAK:
        raise ArgumentError("adt_strengthen expects a weak envelope")
    lam_t = cls.tauD / (1.0 + cls.tauD) * cert.lam
    K_t = cert.K * math.exp(cls.N0 * lam_t)
    return Certificate(K_t, lam_t, STRONG, provenance=(
        f"strengthened weak (K={cert.K:.12g}, lambda={cert.lam:.12g}) with "
        f"lambda~ = tauD/(1+tauD)*lambda, K~ = K*e^(N0*lambda~); "
        f"valid only for sequences with N0={cls.N0}, tauD={cls.tauD:.12g}"
    ))


# ---------------------------------------------------------------------------
# Local stability from the linearization
# ---------------------------------------------------------------------------


@dataclass
class LocalStabilityReport:
    epsilon: float
    r: float
    basin_radius: float
    local_rate: float
    local_K: float
    linearization: str
    provenance: Dict[str, str] = field(default_factory=dict)
    note: str = "radius validated by sampling, not proven"


def _fd_jacobian(fun, t, n, m, h):
    J = np.empty((n, n))
    mu = np.zeros(m)
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (fun(t, e, mu) - fun(t, -e, mu)) / (2.0 * h)
    return J


def local_linearization(sys: GswlSystem, cert: Certificate, radius_probe: float,
                        sample_count: int = 200, rng_seed: int = 0, tol: float = 1e-4,
                        fd_step: float = 1e-6) -> LocalStabilityReport:
    """Local exponential stability radius from the linearization at the origin.

    Takes ``eps = lambda/(2 K e^lambda)`` and bisects for the largest radius
    ``r <= radius_probe`` on which the sampled remainders satisfy
    ``|f(t,xi,0) - A(t) xi| <= eps |xi|`` and ``|g(t,xi,0) - R(t) xi| <= eps |xi|``.
    Solutions starting within ``r / (2 bar_K)`` decay at rate ``lambda/2``.
    Missing ``A``/``R`` are obtained by central differences at the origin.
    """
    _require_strong(cert)
    if radius_probe <= 0:
        raise ArgumentError("radius_probe must be positive")
    rng = np.random.default_rng(rng_seed)
    n, m = sys.n, sys.m
    zero_x, zero_u = np.zeros(n), np.zeros(m)
    t_flow = rng.uniform(0.0, max(sys.seq.horizon, 1e-12), size=sample_count)
    t_jump = sys.seq.array

    for t in t_flow:
        if np.linalg.norm(sys.f(float(t), zero_x, zero_u)) > 1e-10:
            raise PreconditionError(f"origin is not an equilibrium of the flow: f({t:.6g}, 0, 0) != 0")
    for t in t_jump:
        if np.linalg.norm(sys.g(float(t), zero_x, zero_u)) > 1e-10:
            raise PreconditionError(f"origin is not fixed by the jump map: g({t:.6g}, 0, 0) != 0")

    if sys.A is not None and sys.R is not None:
        A, R, source = sys.A, sys.R, "supplied"
    else:
        A = sys.A or MatrixFunction.from_callable(lambda t: _fd_jacobian(sys.f, t, n, m, fd_step), n)
        R = sys.R or MatrixFunction.from_callable(lambda t: _fd_jacobian(sys.g, t, n, m, fd_step), n)
        source = f"central differences at the origin, step {fd_step:g}"

    K, lam = cert.K, cert.lam
    eps = lam / (2.0 * K * math.exp(lam))

    dirs = rng.standard_normal((sample_count, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    fracs = rng.uniform(0.0, 1.0, size=sample_count)
    fracs[: max(1, sample_count // 4)] = 1.0 - 1e-9
    flow_A = [A(float(t)) for t in t_flow]
    jump_R = [R(float(t)) for t in t_jump]

    def holds(r):
        for k in range(sample_count):
            xi = r * fracs[k] * dirs[k]
            bound = eps * np.linalg.norm(xi) * (1 + 1e-12)
            if np.linalg.norm(sys.f(float(t_flow[k]), xi, zero_u) - flow_A[k] @ xi) > bound:
                return False
            if len(t_jump):
                j = k % len(t_jump)
                if np.linalg.norm(sys.g(float(t_jump[j]), xi, zero_u) - jump_R[j] @ xi) > bound:
                    return False
        return True

    if holds(radius_probe):
        r = float(radius_probe)
    else:
        lo, hi = 0.0, float(radius_probe)
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if holds(mid):
                lo = mid
            else:
                hi = mid
        r = lo
    bar_K, local_rate = perturbed_envelope(cert, eps, 0.0, 0.0)
    return LocalStabilityReport(
        epsilon=eps,
        r=r,
        basin_radius=r / (2.0 * bar_K),
        local_rate=local_rate,
        local_K=bar_K,
        linearization=source,
        provenance={
            "epsilon": "eps = lambda/(2*K*e^lambda)",
            "r": "largest sampled radius with remainder <= eps*|xi| (bisection)",
            "basin_radius": "r/(2*bar_K), bar_K = K*exp(0) = K",
            "local_rate": "lambda - K*e^lambda*eps = lambda/2",
        },
    )
