"""Nonlinear impulsive systems written as linear part plus bounded perturbation.

A system is given by a flow map ``f(t, x, u)`` and a jump map ``g(t, x, u)``
together with a decomposition ``f = A(t) x + phi``, ``g = R(t) x + psi`` and
the affine perturbation bound

    |phi|, |psi| <= N(t) |x| + (M |x| + c) eta(|u|),   N(t) = Nbar + theta(t).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from ._numerics import knot_pieces, rk4_step, segment_points, trapezoid_split
from .errors import ArgumentError, ConfigurationError, EscapeError
from .linear_core import LinearImpulsiveSystem, MatrixFunction
from .timebase import ImpulseSequence, InputSignal, KFunction

__all__ = [
    "PerturbationBound",
    "GswlSystem",
    "Trajectory",
    "DecompositionReport",
    "simulate",
    "validate_decomposition",
    "theta_budget",
    "theta_budgets",
    "scalar_function",
]

FLOW, PRE, POST = 0, 1, 2


def scalar_function(obj) -> Tuple[Callable[[float], float], Tuple[float, ...]]:
    """Coerce ``None`` / a number / an :class:`InputSignal` / a callable into ``(fn, breakpoints)``."""
    if obj is None:
        return (lambda t: 0.0), ()
    if isinstance(obj, (int, float)):
        value = float(obj)
        return (lambda t: value), ()
    if isinstance(obj, InputSignal):
        return (lambda t: float(obj(t)[0])), obj.breakpoints
    return (lambda t: float(obj(t))), tuple(getattr(obj, "breakpoints", ()))


@dataclass(frozen=True)
class PerturbationBound:
    """Constants of the perturbation bound.

    ``theta`` is the vanishing part of ``N`` between impulses and
    ``theta_jump`` its value at impulse times (defaults to ``theta``).  Both
    accept a number, a callable of ``t`` or a one-dimensional
    :class:`~impulsive_iss.timebase.InputSignal` (use the latter for
    piecewise-constant profiles so integrals split at the breakpoints).
    """

    Nbar: float = 0.0
    theta: object = None
    M: float = 0.0
    c: float = 0.0
    eta: KFunction = field(default_factory=KFunction.identity)
    theta_jump: object = None

    def __post_init__(self):
        for name in ("Nbar", "M", "c"):
            if not getattr(self, name) >= 0:
                raise ArgumentError(f"{name} must be nonnegative, got {getattr(self, name)}")

    @property
    def theta_fn(self):
        return scalar_function(self.theta)

    @property
    def theta_jump_fn(self):
        return scalar_function(self.theta if self.theta_jump is None else self.theta_jump)

    def N(self, t: float, jump: bool = False) -> float:
        fn = self.theta_jump_fn[0] if jump else self.theta_fn[0]
        return self.Nbar + max(fn(t), 0.0)

    def value(self, t: float, xi_norm: float, mu_norm: float, jump: bool = False) -> float:
        return self.N(t, jump) * xi_norm + (self.M * xi_norm + self.c) * float(self.eta(mu_norm))


def _as_vector_map(fn, n):
    def wrapped(t, xi, mu):
        return np.atleast_1d(np.asarray(fn(t, xi, mu), dtype=float)).reshape(n)

    return wrapped


@dataclass(frozen=True)
class GswlSystem:
    """Impulsive system ``x' = f(t,x,u)`` off ``seq``, ``x(t) = g(t, x(t^-), u(t))`` on ``seq``.

    Give ``f``/``g`` directly, or leave them out and give ``phi``/``psi``
    (then ``f = A x + phi`` and ``g = R x + psi``).  When both are present the
    consistency is checked by :func:`validate_decomposition`.
    """

    n: int
    m: int
    seq: ImpulseSequence
    f: Optional[Callable] = None
    g: Optional[Callable] = None
    A: Optional[MatrixFunction] = None
    R: Optional[MatrixFunction] = None
    phi: Optional[Callable] = None
    psi: Optional[Callable] = None
    bound: Optional[PerturbationBound] = None

    def __post_init__(self):
        A = None if self.A is None else MatrixFunction.coerce(self.A)
        R = None if self.R is None else MatrixFunction.coerce(self.R)
        for name, mat in (("A", A), ("R", R)):
            if mat is not None and mat.n != self.n:
                raise ConfigurationError(f"{name} is {mat.n}x{mat.n}, expected {self.n}x{self.n}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "R", R)
        f, g = self.f, self.g
        if f is None:
            if A is None or self.phi is None:
                raise ConfigurationError("flow map needs f, or both A and phi")
            phi = self.phi
            f = lambda t, xi, mu: A(t) @ xi + np.asarray(phi(t, xi, mu), dtype=float)  # noqa: E731
        if g is None:
            if R is None or self.psi is None:
                raise ConfigurationError("jump map needs g, or both R and psi")
            psi = self.psi
            g = lambda t, xi, mu: R(t) @ xi + np.asarray(psi(t, xi, mu), dtype=float)  # noqa: E731
        object.__setattr__(self, "f", _as_vector_map(f, self.n))
        object.__setattr__(self, "g", _as_vector_map(g, self.n))

    @classmethod
    def linear_plus(cls, A, R, phi, psi, seq: ImpulseSequence, m: int = 1,
                    bound: Optional[PerturbationBound] = None) -> "GswlSystem":
        A = MatrixFunction.coerce(A)
        return cls(A.n, m, seq, A=A, R=R, phi=phi, psi=psi, bound=bound)

    def flow_perturbation(self, t, xi, mu) -> np.ndarray:
        if self.phi is not None:
            return np.atleast_1d(np.asarray(self.phi(t, xi, mu), dtype=float))
        self._need_linear_part()
        return self.f(t, xi, mu) - self.A(t) @ xi

    def jump_perturbation(self, t, xi, mu) -> np.ndarray:
        if self.psi is not None:
            return np.atleast_1d(np.asarray(self.psi(t, xi, mu), dtype=float))
        self._need_linear_part()
        return self.g(t, xi, mu) - self.R(t) @ xi

    def _need_linear_part(self):
        if self.A is None or self.R is None:
            raise ConfigurationError("operation needs the linear part (A, R)")

    def linear_part(self) -> LinearImpulsiveSystem:
        self._need_linear_part()
        return LinearImpulsiveSystem(self.A, self.R, self.seq)

    def with_sequence(self, seq: ImpulseSequence) -> "GswlSystem":
        return replace(self, seq=seq)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Right-continuous sampled solution.

    Each impulse time in ``(t0, t_end]`` appears twice: a ``PRE`` row with
    ``x(tau^-)`` and a ``POST`` row with ``x(tau)``.
    """

    t: np.ndarray
    x: np.ndarray
    kind: np.ndarray
    t0: float
    t_end: float
    u: Optional[InputSignal] = None
    events: List[Tuple[float, np.ndarray, np.ndarray]] = field(default_factory=list)

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.x, axis=1)

    @property
    def x0(self) -> np.ndarray:
        return self.x[0]

    @property
    def final(self) -> np.ndarray:
        return self.x[-1]

    def value(self, t: float, left: bool = False) -> np.ndarray:
        """State at a sample time; ``left=True`` returns ``x(t^-)`` at impulses."""
        idx = np.flatnonzero(self.t == t)
        if idx.size == 0:
            raise ArgumentError(f"t={t} is not a sample time")
        return self.x[idx[0] if left else idx[-1]]

    def to_csv(self, handle=None) -> str:
        """Write ``t,x_1..x_n,is_jump,pre_post`` rows; returns the text when no handle is given."""
        out = io.StringIO() if handle is None else handle
        writer = csv.writer(out, lineterminator="\n")
        n = self.x.shape[1]
        writer.writerow(["t"] + [f"x_{i + 1}" for i in range(n)] + ["is_jump", "pre_post"])
        labels = {FLOW: "", PRE: "pre", POST: "post"}
        for t, x, k in zip(self.t, self.x, self.kind):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in x]
                            + [int(k != FLOW), labels[int(k)]])
        return out.getvalue() if handle is None else ""


def simulate(sys: GswlSystem, t0: float, x0, u: Optional[InputSignal], t_end: float,
             step: float = 1e-3, blowup_cap: float = 1e12) -> Trajectory:
    """Integrate the impulsive system from ``(t0, x0)`` up to ``t_end``.

    Flow pieces are integrated by fixed-step RK4 landing on every impulse time
    and input breakpoint; at each impulse ``tau`` in ``(t0, t_end]`` the state
    is reset to ``g(tau, x(tau^-), u(tau))``.  A solution always starts by
    flowing, so no jump is applied at ``t0``.
    """
    if t_end < t0:
        raise ArgumentError(f"need t0 <= t_end, got t0={t0}, t_end={t_end}")
    if step <= 0:
        raise ArgumentError("step must be positive")
    sys.seq.check_horizon(t_end)
    u = InputSignal.zero(sys.m) if u is None else u
    x = np.atleast_1d(np.asarray(x0, dtype=float)).reshape(sys.n).copy()
    impulses = sys.seq.within(t0, t_end)
    impulse_set = set(impulses)
    knots = tuple(impulses) + tuple(b for b in u.breakpoints if t0 < b < t_end)

    f = sys.f

    def rhs(t, y):
        return f(t, y, u(t))

    ts, xs, kinds = [t0], [x.copy()], [FLOW]
    events = []
    for lo, hi in knot_pieces(t0, t_end, knots):
        pts = segment_points(lo, hi, step)
        last = len(pts) - 2
        is_impulse = hi in impulse_set
        for k in range(last + 1):
            x = rk4_step(rhs, pts[k], x, pts[k + 1] - pts[k], t_end_left=(k == last))
            nrm = float(np.linalg.norm(x))
            if not nrm <= blowup_cap:
                raise EscapeError(pts[k + 1], nrm, blowup_cap)
            ts.append(pts[k + 1])
            xs.append(x.copy())
            kinds.append(PRE if (is_impulse and k == last) else FLOW)
        if is_impulse:
            pre = x.copy()
            x = sys.g(hi, x, u(hi))
            nrm = float(np.linalg.norm(x))
            if not nrm <= blowup_cap:
                raise EscapeError(hi, nrm, blowup_cap)
            ts.append(hi)
            xs.append(x.copy())
            kinds.append(POST)
            events.append((hi, pre, x.copy()))
    return Trajectory(np.asarray(ts), np.asarray(xs), np.asarray(kinds, dtype=int),
                      float(t0), float(t_end), u, events)


# ---------------------------------------------------------------------------
# Decomposition checks
# ---------------------------------------------------------------------------


@dataclass
class DecompositionReport:
    passed: bool
    worst_margin: float
    worst_sample: dict
    flow_samples: int
    jump_samples: int
    seed: int
    consistency_residual: Optional[float] = None
    note: str = "sampling check, not a proof"


def _ball(rng, dim, radius, count):
    if dim == 0:
        return np.zeros((count, 0))
    d = rng.standard_normal((count, dim))
    d /= np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-300)
    r = radius * rng.uniform(0.0, 1.0, size=(count, 1)) ** (1.0 / dim)
    return d * r


def validate_decomposition(sys: GswlSystem, sample_count: int = 1000, state_radius: float = 1.0,
                           input_radius: float = 1.0, rng_seed: int = 0,
                           consistency_tol: float = 1e-10, rtol: float = 1e-12) -> DecompositionReport:
    """Check the perturbation bounds on random ``(t, xi, mu)`` samples.

    Flow samples use ``t`` uniform on ``[0, horizon]``; jump samples use the
    impulse times.  The margin of a sample is ``bound - |perturbation|``; a
    sample counts as a violation when the margin is below ``-rtol * bound``,
    so bounds that hold with equality are not flagged for rounding.
    """
    if state_radius <= 0 or input_radius <= 0:
        raise ArgumentError("radii must be positive")
    if sys.bound is None:
        raise ConfigurationError("system has no perturbation bound")
    rng = np.random.default_rng(rng_seed)
    bound = sys.bound
    horizon = sys.seq.horizon
    impulses = sys.seq.array

    t_flow = rng.uniform(0.0, horizon, size=sample_count)
    xi_flow = _ball(rng, sys.n, state_radius, sample_count)
    mu_flow = _ball(rng, sys.m, input_radius, sample_count)
    n_jump = sample_count if impulses.size else 0
    t_jump = impulses[rng.integers(0, impulses.size, size=n_jump)] if n_jump else np.zeros(0)
    xi_jump = _ball(rng, sys.n, state_radius, n_jump)
    mu_jump = _ball(rng, sys.m, input_radius, n_jump)

    worst = np.inf
    worst_sample: dict = {}
    residual = 0.0
    violated = False
    check_consistency = (sys.phi is not None or sys.psi is not None) and sys.A is not None and sys.R is not None
    for jump, ts, xis, mus in ((False, t_flow, xi_flow, mu_flow), (True, t_jump, xi_jump, mu_jump)):
        for t, xi, mu in zip(ts, xis, mus):
            t = float(t)
            if not jump and t in sys.seq:
                continue
            pert = sys.jump_perturbation(t, xi, mu) if jump else sys.flow_perturbation(t, xi, mu)
            rhs = bound.value(t, float(np.linalg.norm(xi)), float(np.linalg.norm(mu)), jump)
            margin = rhs - float(np.linalg.norm(pert))
            violated = violated or margin < -rtol * max(rhs, 1e-300)
            if margin < worst:
                worst = margin
                worst_sample = {"t": t, "xi": xi.tolist(), "mu": mu.tolist(),
                                "map": "jump" if jump else "flow"}
            if check_consistency:
                if jump and sys.psi is not None:
                    lin = sys.R(t) @ xi
                    residual = max(residual, float(np.max(np.abs(sys.g(t, xi, mu) - lin - pert))))
                elif not jump and sys.phi is not None:
                    lin = sys.A(t) @ xi
                    residual = max(residual, float(np.max(np.abs(sys.f(t, xi, mu) - lin - pert))))
    consistent = residual <= consistency_tol
    return DecompositionReport(
        passed=bool(not violated and consistent),
        worst_margin=float(worst),
        worst_sample=worst_sample,
        flow_samples=int(sample_count),
        jump_samples=int(n_jump),
        seed=int(rng_seed),
        consistency_residual=residual if check_consistency else None,
    )


def theta_budgets(sys: GswlSystem, grid_step: float = 1e-3) -> Tuple[float, float]:
    """``(int_0^horizon theta(s) ds, sum_{tau in sigma} theta(tau))``."""
    if grid_step <= 0:
        raise ArgumentError("grid_step must be positive")
    if sys.bound is None:
        return 0.0, 0.0
    fn, bps = sys.bound.theta_fn
    jump_fn, _ = sys.bound.theta_jump_fn
    knots = tuple(sys.seq.times) + bps
    integral = trapezoid_split(lambda t: max(fn(t), 0.0), 0.0, sys.seq.horizon, grid_step, knots)
    jumps = sum(max(jump_fn(tau), 0.0) for tau in sys.seq.times)
    return float(integral), float(jumps)


def theta_budget(sys: GswlSystem, grid_step: float = 1e-3) -> float:
    """``int_0^horizon theta(s) ds + sum_{tau in sigma} theta(tau)``."""
    return float(sum(theta_budgets(sys, grid_step)))
