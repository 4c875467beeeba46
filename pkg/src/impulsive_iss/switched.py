"""Switched impulsive systems whose switching instants are the impulse instants.

A :class:`SwitchedSystem` holds one flow map per mode and one reset map per
ordered mode pair.  :func:`cast_to_gswl` turns it, for a given
:class:`SwitchingSignal`, into a single time-varying :class:`GswlSystem`.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .certificates import IssReport, adt_strengthen, certify
from .errors import ArgumentError, ConfigurationError, PreconditionError, ThresholdError
from .gswl import GswlSystem, PerturbationBound, theta_budgets
from .linear_core import STRONG, WEAK, Certificate, MatrixFunction, estimate_envelope
from .timebase import DwellClass, ImpulseSequence, InputSignal, KFunction, check_dwell_class

__all__ = [
    "SwitchedSystem",
    "SwitchingSignal",
    "cast_to_gswl",
    "switched_certify",
    "ROUTE_STRONG",
    "ROUTE_DWELL",
    "ROUTE_GENERAL",
]

ROUTE_STRONG = "uniform strong envelope, constant N"
ROUTE_DWELL = "weak envelope strengthened by average dwell time, constant N"
ROUTE_GENERAL = "general: time-varying N budgets over an explicit signal list"

Pair = Tuple[int, int]


def _as_map(obj, n):
    """Matrix-valued data -> ``MatrixFunction``; callables of ``(t, xi, mu)`` pass through."""
    return None if obj is None else MatrixFunction.coerce(obj)


@dataclass(frozen=True)
class SwitchedSystem:
    """Modes ``1..n_modes`` with flows ``f_i`` and resets ``g_{i,j}``.

    A missing flow (reset) defaults to the linear map ``A_i xi`` (``R_ij xi``).
    ``N`` and ``N_pair`` hold the linear coefficients of the perturbation
    bounds, each a number or a callable of ``t``; ``M``, ``c`` and ``eta`` are
    shared by every mode.
    """

    n: int
    m: int
    n_modes: int
    flows: Dict[int, Callable] = field(default_factory=dict)
    resets: Dict[Pair, Callable] = field(default_factory=dict)
    A: Dict[int, object] = field(default_factory=dict)
    R: Dict[Pair, object] = field(default_factory=dict)
    N: Dict[int, object] = field(default_factory=dict)
    N_pair: Dict[Pair, object] = field(default_factory=dict)
    M: float = 0.0
    c: float = 0.0
    eta: KFunction = field(default_factory=KFunction.identity)

    def __post_init__(self):
        if self.n_modes < 1:
            raise ConfigurationError("need at least one mode")
        modes = set(range(1, self.n_modes + 1))
        for name in ("flows", "A", "N"):
            extra = set(getattr(self, name)) - modes
            if extra:
                raise ConfigurationError(f"{name} keyed by unknown modes {sorted(extra)}")
        for name in ("resets", "R", "N_pair"):
            for i, j in getattr(self, name):
                if i == j or i not in modes or j not in modes:
                    raise ConfigurationError(f"{name} has invalid mode pair {i}->{j}")
        for i in modes:
            if i not in self.flows and i not in self.A:
                raise ConfigurationError(f"mode {i} has neither a flow map nor a linear part")
        object.__setattr__(self, "A", {k: _as_map(v, self.n) for k, v in self.A.items()})
        object.__setattr__(self, "R", {k: _as_map(v, self.n) for k, v in self.R.items()})

    @property
    def modes(self) -> List[int]:
        return list(range(1, self.n_modes + 1))

    def has_reset(self, pair: Pair) -> bool:
        return pair in self.resets or pair in self.R

    def flow(self, i: int) -> Callable:
        if i in self.flows:
            return self.flows[i]
        A = self.A[i]
        return lambda t, xi, mu: A(t) @ xi

    def reset(self, pair: Pair) -> Callable:
        if pair in self.resets:
            return self.resets[pair]
        if pair in self.R:
            R = self.R[pair]
            return lambda t, xi, mu: R(t) @ xi
        raise ConfigurationError(f"no reset map for mode pair {pair[0]}->{pair[1]}")

    def constant_N(self) -> Optional[float]:
        """Largest coefficient if every ``N``/``N_pair`` entry is a constant, else ``None``."""
        values = list(self.N.values()) + list(self.N_pair.values())
        if any(callable(v) for v in values):
            return None
        return max((float(v) for v in values), default=0.0)


@dataclass(frozen=True)
class SwitchingSignal:
    """Right-continuous piecewise-constant mode schedule.

    ``switches`` lists ``(time, new_mode)`` with strictly increasing positive
    times; a switch into the mode already active is rejected.
    """

    initial_mode: int
    switches: Tuple[Tuple[float, int], ...] = ()
    horizon: Optional[float] = None

    def __post_init__(self):
        sw = tuple((float(t), int(k)) for t, k in self.switches)
        prev_t, prev_mode = 0.0, int(self.initial_mode)
        for t, k in sw:
            if not t > prev_t:
                raise ArgumentError(f"switch times must be positive and strictly increasing (got {t} after {prev_t})")
            if k == prev_mode:
                raise ArgumentError(f"switch at t={t} keeps mode {k}; same-mode switches are not switches")
            prev_t, prev_mode = t, k
        object.__setattr__(self, "switches", sw)
        object.__setattr__(self, "initial_mode", int(self.initial_mode))
        horizon = self.horizon
        if horizon is None:
            horizon = sw[-1][0] if sw else 1.0
        elif sw and sw[-1][0] > horizon:
            raise ArgumentError(f"switch at t={sw[-1][0]} beyond horizon {horizon}")
        object.__setattr__(self, "horizon", float(horizon))

    @property
    def times(self) -> Tuple[float, ...]:
        return tuple(t for t, _ in self.switches)

    @property
    def sequence(self) -> ImpulseSequence:
        return ImpulseSequence(self.times, self.horizon)

    @property
    def modes_used(self) -> List[int]:
        return [self.initial_mode] + [k for _, k in self.switches]

    @property
    def pairs_used(self) -> List[Pair]:
        seq = self.modes_used
        return list(zip(seq[:-1], seq[1:]))

    def mode_at(self, t: float) -> int:
        idx = bisect.bisect_right(self.times, t)
        return self.initial_mode if idx == 0 else self.switches[idx - 1][1]

    def mode_before(self, t: float) -> int:
        """Left limit ``nu(t^-)``."""
        idx = bisect.bisect_left(self.times, t)
        return self.initial_mode if idx == 0 else self.switches[idx - 1][1]


def _stitched_theta(sw: SwitchedSystem, nu: SwitchingSignal, Nbar: float):
    """Flow and jump parts of ``N^nu(t) - Nbar`` (numbers, piecewise signals or callables)."""
    def coeff(table, key):
        return table.get(key, 0.0)

    modes = nu.modes_used
    flow_vals = [coeff(sw.N, k) for k in modes]
    if all(not callable(v) for v in flow_vals):
        theta = InputSignal.piecewise_constant(nu.times, [[max(float(v) - Nbar, 0.0)] for v in flow_vals])
    else:
        def theta_fn(t):
            v = coeff(sw.N, nu.mode_at(t))
            return max((v(t) if callable(v) else float(v)) - Nbar, 0.0)
        theta = InputSignal.from_callable(lambda t: [theta_fn(t)], 1, nu.times)

    def theta_jump(t):
        v = coeff(sw.N_pair, (nu.mode_before(t), nu.mode_at(t)))
        return max((v(t) if callable(v) else float(v)) - Nbar, 0.0)

    return theta, theta_jump


def cast_to_gswl(sw: SwitchedSystem, nu: SwitchingSignal, Nbar: Optional[float] = None) -> GswlSystem:
    """The impulsive system driven by ``nu``: flows of the active mode, resets at switches.

    The linear parts are stitched the same way when every mode and used pair
    has one.  The bound's ``N`` is ``Nbar`` (default: the largest constant
    coefficient, or 0 if any is time-varying) plus a stitched excess ``theta``.
    """
    for pair in nu.pairs_used:
        if not sw.has_reset(pair):
            raise ConfigurationError(f"no reset map for mode pair {pair[0]}->{pair[1]}")
    for k in nu.modes_used:
        if k not in sw.modes:
            raise ConfigurationError(f"signal uses unknown mode {k}")

    flows = {k: sw.flow(k) for k in set(nu.modes_used)}
    resets = {p: sw.reset(p) for p in set(nu.pairs_used)}

    def f(t, xi, mu):
        return flows[nu.mode_at(t)](t, xi, mu)

    def g(t, xi, mu):
        return resets[(nu.mode_before(t), nu.mode_at(t))](t, xi, mu)

    A = R = None
    if all(k in sw.A for k in set(nu.modes_used)):
        A_modes = {k: sw.A[k] for k in set(nu.modes_used)}
        if all(a.kind == "constant" for a in A_modes.values()):
            A = MatrixFunction.piecewise_constant(nu.times, [A_modes[k].matrix for k in nu.modes_used])
        else:
            A = MatrixFunction.from_callable(lambda t: A_modes[nu.mode_at(t)](t), sw.n, nu.times)
    if all(p in sw.R for p in set(nu.pairs_used)):
        R_pairs = {p: sw.R[p] for p in set(nu.pairs_used)}
        eye = np.eye(sw.n)

        def R_fn(t):
            pair = (nu.mode_before(t), nu.mode_at(t))
            return R_pairs[pair](t) if pair in R_pairs else eye

        R = MatrixFunction.from_callable(R_fn, sw.n, nu.times)

    if Nbar is None:
        Nbar = sw.constant_N()
        Nbar = 0.0 if Nbar is None else Nbar
    theta, theta_jump = _stitched_theta(sw, nu, Nbar)
    bound = PerturbationBound(Nbar=Nbar, theta=theta, M=sw.M, c=sw.c, eta=sw.eta, theta_jump=theta_jump)
    return GswlSystem(sw.n, sw.m, nu.sequence, f=f, g=g, A=A, R=R, bound=bound)


def _fit_family(sw: SwitchedSystem, signals: Sequence[SwitchingSignal], flavor: str, **fit_kwargs) -> Certificate:
    systems = [cast_to_gswl(sw, nu).linear_part() for nu in signals]
    return estimate_envelope(systems if len(systems) > 1 else systems[0], flavor, **fit_kwargs).certificate


def switched_certify(sw: SwitchedSystem, signal_class: Union[Sequence[SwitchingSignal], DwellClass],
                     cert_source: Union[Certificate, str], dwell_class: Optional[DwellClass] = None,
                     chosen_R: Optional[float] = None, fit_flavor: str = STRONG,
                     theta_grid_step: float = 1e-3, **fit_kwargs) -> IssReport:
    """Certificate for a switched system, uniform over ``signal_class``.

    ``cert_source`` is a :class:`Certificate` valid for every signal of the
    class, or ``"fit"`` to fit one over an explicit signal list.  Routes:

    * constant ``N``, strong envelope: the certificate formulas with zero budgets;
    * constant ``N``, weak envelope plus a :class:`DwellClass`: the envelope is
      strengthened first and the threshold becomes
      ``Nbar < lambda~/(K~ e^lambda~)``;
    * time-varying ``N``: the excess over ``Nbar`` is budgeted per signal of an
      explicit list and the largest budgets are used.
    """
    explicit = not isinstance(signal_class, DwellClass)
    if explicit:
        signals = list(signal_class)
        if not signals:
            raise ArgumentError("empty signal list")
        if dwell_class is not None:
            for nu in signals:
                check = check_dwell_class(nu.sequence, dwell_class)
                if not check.ok:
                    raise PreconditionError(
                        f"signal with switches {nu.times[:6]} is not in the dwell class "
                        f"(N0={dwell_class.N0}, tauD={dwell_class.tauD}); offending window {check.window}"
                    )
    else:
        signals = []
        dwell_class = signal_class

    notes: List[str] = []
    if isinstance(cert_source, str):
        if cert_source != "fit":
            raise ArgumentError(f"cert_source must be a Certificate or 'fit', got {cert_source!r}")
        if not explicit:
            raise ArgumentError("an envelope can only be fitted over an explicit signal list")
        cert = _fit_family(sw, signals, fit_flavor, **fit_kwargs)
        notes.append(
            f"envelope fitted over {len(signals)} explicit signal(s); it does not certify "
            "signals outside that list"
        )
    else:
        cert = cert_source

    route = ROUTE_STRONG
    if cert.flavor == WEAK:
        if dwell_class is None:
            raise PreconditionError("a weak envelope needs a dwell class to be strengthened")
        cert = adt_strengthen(cert, dwell_class)
        route = ROUTE_DWELL

    Nbar = sw.constant_N()
    theta_c = theta_d = 0.0
    if Nbar is None:
        if not explicit:
            raise PreconditionError("time-varying N needs an explicit signal list to budget its excess")
        route = ROUTE_GENERAL if route == ROUTE_STRONG else f"{ROUTE_GENERAL} (after dwell-time strengthening)"
        Nbar = 0.0
        for nu in signals:
            tc, td = theta_budgets(cast_to_gswl(sw, nu, Nbar=0.0), theta_grid_step)
            theta_c, theta_d = max(theta_c, tc), max(theta_d, td)
        notes.append("time-varying N: budgets are the largest over the listed signals and horizons")

    bound = PerturbationBound(Nbar=Nbar, M=sw.M, c=sw.c, eta=sw.eta)
    limit = cert.lam / (cert.K * math.exp(cert.lam))
    if not Nbar < limit:
        if route.startswith(ROUTE_DWELL):
            raise ThresholdError("Nbar", Nbar, limit, "Nbar < lambda~/(K~*e^lambda~)")
        raise ThresholdError("Nbar", Nbar, limit, "Nbar < lambda/(K*e^lambda)")
    report = certify(cert, bound, theta_c, theta_d, chosen_R)
    report.route = route
    report.notes.extend(notes)
    if route == ROUTE_DWELL:
        report.notes.append(
            f"valid for switching signals whose switch times lie in the dwell class "
            f"N0={dwell_class.N0}, tauD={dwell_class.tauD:g}"
        )
    return report
