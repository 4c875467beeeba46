"""Impulse-time sequences, dwell-time classes, input signals and their norms.

Sequences are finite truncations of an impulse-time sequence to a working
horizon.  The horizon is kept as an explicit field so that every query past
it can be refused instead of silently under-counting impulses.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ._numerics import knot_pieces, segment_points, trapezoid_split
from .errors import ArgumentError, HorizonError

__all__ = [
    "ImpulseSequence",
    "DwellClass",
    "DwellCheck",
    "InputSignal",
    "KFunction",
    "count_impulses",
    "check_dwell_class",
    "harmonic_sequence",
    "periodic_sequence",
    "sup_norm",
    "sigma_rho_norm",
]


# ---------------------------------------------------------------------------
# Impulse sequences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImpulseSequence:
    """Strictly increasing impulse times ``0 < tau_1 < tau_2 < ... <= horizon``.

    Parameters
    ----------
    times : sequence of float
        The impulse instants.
    horizon : float, optional
        End of the working window.  Defaults to the last impulse time (or 0
        for an empty sequence).
    """

    times: Tuple[float, ...]
    horizon: float = None  # type: ignore[assignment]

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        horizon = self.horizon
        if horizon is None:
            horizon = times[-1] if times else 0.0
        horizon = float(horizon)
        if times:
            if times[0] <= 0:
                raise ArgumentError(f"impulse times must be positive, got tau_1={times[0]}")
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ArgumentError("impulse times must be strictly increasing")
            if times[-1] > horizon:
                raise ArgumentError(
                    f"impulse time {times[-1]} lies beyond the horizon {horizon}"
                )
        if not math.isfinite(horizon) or horizon < 0:
            raise ArgumentError(f"horizon must be finite and nonnegative, got {horizon}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "horizon", horizon)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.times, dtype=float)

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self):
        return iter(self.times)

    def __contains__(self, t) -> bool:
        i = bisect.bisect_left(self.times, float(t))
        return i < len(self.times) and self.times[i] == float(t)

    def count(self, s: float, t: float) -> int:
        return count_impulses(self, s, t)

    def within(self, s: float, t: float) -> Tuple[float, ...]:
        """Impulse times in the half-open window ``(s, t]``."""
        lo = bisect.bisect_right(self.times, s)
        hi = bisect.bisect_right(self.times, t)
        return self.times[lo:hi]

    def with_horizon(self, horizon: float) -> "ImpulseSequence":
        """Truncate (or extend the window of) the sequence to a new horizon."""
        return ImpulseSequence(tuple(t for t in self.times if t <= horizon), horizon)

    def check_horizon(self, t: float) -> None:
        if t > self.horizon * (1 + 1e-12) + 1e-12:
            raise HorizonError(f"t={t} exceeds the sequence horizon {self.horizon}")


def count_impulses(seq: ImpulseSequence, s: float, t: float) -> int:
    """Number of impulse times in ``(s, t]``.

    >>> count_impulses(ImpulseSequence((1.0, 2.0, 3.0)), 0.9, 1.0)
    1
    """
    if t < s:
        raise ArgumentError(f"need s <= t, got s={s}, t={t}")
    seq.check_horizon(t)
    return bisect.bisect_right(seq.times, t) - bisect.bisect_right(seq.times, s)


def harmonic_sequence(k_max: int, horizon: Optional[float] = None) -> ImpulseSequence:
    """``tau_1 = 1``, ``tau_{k+1} = tau_k + 1/k`` for ``k < k_max``.

    The gaps shrink like ``1/k`` so no average dwell time exists; this is the
    sequence that defeats weak stability under jump perturbations.
    """
    if k_max < 1:
        raise ArgumentError("k_max must be >= 1")
    times = [1.0]
    for k in range(1, k_max):
        times.append(times[-1] + 1.0 / k)
    return ImpulseSequence(tuple(times), horizon)


def periodic_sequence(period: float, horizon: float, offset: Optional[float] = None) -> ImpulseSequence:
    """Impulses at ``offset, offset + period, ...`` up to the horizon (offset defaults to period)."""
    if period <= 0:
        raise ArgumentError("period must be positive")
    offset = period if offset is None else float(offset)
    if offset <= 0:
        raise ArgumentError("offset must be positive")
    n = int(np.floor((horizon - offset) / period + 1e-9)) + 1 if horizon >= offset else 0
    times = tuple(offset + k * period for k in range(n))
    times = tuple(t for t in times if t <= horizon * (1 + 1e-12))
    return ImpulseSequence(times, max(horizon, times[-1]) if times else horizon)


# ---------------------------------------------------------------------------
# Average dwell-time classes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DwellClass:
    """Chatter bound ``N0`` and average dwell time ``tauD``."""

    N0: int
    tauD: float

    def __post_init__(self):
        if int(self.N0) != self.N0 or self.N0 < 1:
            raise ArgumentError(f"N0 must be an integer >= 1, got {self.N0}")
        if not self.tauD > 0:
            raise ArgumentError(f"tauD must be positive, got {self.tauD}")
        object.__setattr__(self, "N0", int(self.N0))
        object.__setattr__(self, "tauD", float(self.tauD))


class DwellCheck(NamedTuple):
    ok: bool
    pair: Optional[Tuple[int, int]]
    """First violating ``(i, j)`` (1-based impulse indices, ``i = 0`` for a window opening at t=0)."""
    window: Optional[Tuple[float, float]]


def check_dwell_class(seq: ImpulseSequence, cls: DwellClass, tol: float = 1e-12) -> DwellCheck:
    """Exact membership test for ``n_(s,t] <= N0 + (t - s)/tauD``.

    The count is piecewise constant in ``s`` and the window length shrinks
    as ``s`` grows, so the constraint is tightest with ``s`` just below an
    impulse time (or at ``s = 0``) and ``t`` on an impulse time.  Checking
    those finitely many windows is therefore exact.
    """
    tau = seq.array
    n = tau.size
    if n == 0:
        return DwellCheck(True, None, None)
    j = np.arange(1, n + 1)
    # column 0: window (0, tau_j]; column i >= 1: window [tau_i, tau_j]
    counts = np.empty((n, n + 1))
    lengths = np.empty((n, n + 1))
    counts[:, 0] = j
    lengths[:, 0] = tau
    i = np.arange(1, n + 1)
    counts[:, 1:] = j[:, None] - i[None, :] + 1
    lengths[:, 1:] = tau[:, None] - tau[None, :]
    valid = np.ones((n, n + 1), dtype=bool)
    valid[:, 1:] = i[None, :] <= j[:, None]
    excess = counts - cls.N0 - lengths / cls.tauD
    bad = valid & (excess > tol * (1.0 + counts))
    if not bad.any():
        return DwellCheck(True, None, None)
    row, col = np.argwhere(bad)[0]
    jj = int(row) + 1
    ii = int(col)
    start = 0.0 if ii == 0 else float(tau[ii - 1])
    return DwellCheck(False, (ii, jj), (start, float(tau[jj - 1])))


# ---------------------------------------------------------------------------
# Input signals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InputSignal:
    """A locally bounded input ``u: [0, inf) -> R^m``.

    Use the constructors :meth:`zero`, :meth:`piecewise_constant` and
    :meth:`from_callable`.  Piecewise-constant signals are right-continuous:
    ``values[k]`` is active on ``[breakpoints[k-1], breakpoints[k])``.
    """

    kind: str
    m: int
    breakpoints: Tuple[float, ...] = ()
    values: Optional[np.ndarray] = field(default=None, compare=False)
    func: Optional[Callable[[float], np.ndarray]] = field(default=None, compare=False)

    @classmethod
    def zero(cls, m: int = 1) -> "InputSignal":
        return cls("zero", int(m))

    @classmethod
    def piecewise_constant(cls, breakpoints: Sequence[float], values) -> "InputSignal":
        bps = tuple(float(b) for b in breakpoints)
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise ArgumentError("breakpoints must be strictly increasing")
        vals = np.asarray(values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != len(bps) + 1:
            raise ArgumentError(
                f"need len(breakpoints)+1 = {len(bps) + 1} value rows, got {vals.shape[0]}"
            )
        vals.setflags(write=False)
        return cls("piecewise", vals.shape[1], bps, vals)

    @classmethod
    def constant(cls, value) -> "InputSignal":
        return cls.piecewise_constant((), [np.atleast_1d(np.asarray(value, dtype=float))])

    @classmethod
    def from_callable(cls, func: Callable[[float], object], m: int = 1,
                      breakpoints: Sequence[float] = ()) -> "InputSignal":
        """Wrap ``func(t)``; declare any discontinuities as ``breakpoints``."""
        return cls("expression", int(m), tuple(float(b) for b in breakpoints), None, func)

    def __call__(self, t: float) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(self.m)
        if self.kind == "piecewise":
            return self.values[bisect.bisect_right(self.breakpoints, t)]
        return np.atleast_1d(np.asarray(self.func(t), dtype=float)).reshape(self.m)

    def magnitude(self, t: float) -> float:
        return float(np.linalg.norm(self(t)))

    def scaled(self, factor: float) -> "InputSignal":
        if self.kind == "zero":
            return self
        if self.kind == "piecewise":
            return InputSignal.piecewise_constant(self.breakpoints, factor * self.values)
        f = self.func
        return InputSignal.from_callable(lambda t: factor * np.asarray(f(t)), self.m, self.breakpoints)


# ---------------------------------------------------------------------------
# Class-K functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KFunction:
    """Continuous, strictly increasing ``eta`` with ``eta(0) = 0``.

    Kinds: ``identity``, ``power`` (``r**p``), ``scaled`` (``a*r``),
    ``saturating`` (``a*r/(1+r)``) and ``tabulated`` (piecewise-linear through
    a monotone table starting at the origin, extrapolated linearly).
    """

    kind: str = "identity"
    param: float = 1.0
    table: Optional[Tuple[Tuple[float, ...], Tuple[float, ...]]] = None

    def __post_init__(self):
        if self.kind not in ("identity", "power", "scaled", "saturating", "tabulated"):
            raise ArgumentError(f"unknown class-K kind {self.kind!r}")
        if self.kind in ("power", "scaled", "saturating") and not self.param > 0:
            raise ArgumentError(f"{self.kind} parameter must be positive")
        if self.kind == "tabulated":
            if self.table is None:
                raise ArgumentError("tabulated class-K function needs a table")
            r, v = (tuple(float(x) for x in col) for col in self.table)
            if len(r) != len(v) or len(r) < 2:
                raise ArgumentError("table needs matching columns with at least two rows")
            if r[0] != 0.0 or v[0] != 0.0:
                raise ArgumentError("table must start at (0, 0)")
            if any(b <= a for a, b in zip(r, r[1:])) or any(b <= a for a, b in zip(v, v[1:])):
                raise ArgumentError("table must be strictly increasing in both columns")
            object.__setattr__(self, "table", (r, v))

    @classmethod
    def identity(cls) -> "KFunction":
        return cls("identity")

    @classmethod
    def power(cls, p: float) -> "KFunction":
        return cls("power", p)

    @classmethod
    def scaled(cls, a: float) -> "KFunction":
        return cls("scaled", a)

    @classmethod
    def saturating(cls, a: float) -> "KFunction":
        return cls("saturating", a)

    @classmethod
    def tabulated(cls, r: Sequence[float], values: Sequence[float]) -> "KFunction":
        return cls("tabulated", 1.0, (tuple(r), tuple(values)))

    @property
    def sup(self) -> float:
        """Supremum of the range (``inf`` unless saturating)."""
        return self.param if self.kind == "saturating" else math.inf

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ArgumentError("class-K functions are defined on r >= 0")
        if self.kind == "identity":
            out = r
        elif self.kind == "power":
            out = r ** self.param
        elif self.kind == "scaled":
            out = self.param * r
        elif self.kind == "saturating":
            out = self.param * r / (1.0 + r)
        else:
            rs, vs = (np.asarray(c) for c in self.table)
            slope = (vs[-1] - vs[-2]) / (rs[-1] - rs[-2])
            out = np.where(r <= rs[-1], np.interp(r, rs, vs), vs[-1] + slope * (r - rs[-1]))
        return float(out) if out.ndim == 0 else out

    def inverse(self, y: float) -> float:
        """``eta^{-1}(y)`` for ``y`` in the range of ``eta``."""
        y = float(y)
        if y < 0:
            raise ArgumentError("inverse needs y >= 0")
        if y >= self.sup:
            raise ArgumentError(f"y={y} is outside the range [0, {self.sup}) of the function")
        if self.kind == "identity":
            return y
        if self.kind == "power":
            return y ** (1.0 / self.param)
        if self.kind == "scaled":
            return y / self.param
        if self.kind == "saturating":
            return y / (self.param - y)
        return self._bisect_inverse(y)

    def _bisect_inverse(self, y: float, rtol: float = 1e-12) -> float:
        if y == 0.0:
            return 0.0
        lo, hi = 0.0, 1.0
        while self(hi) < y:
            lo, hi = hi, 2.0 * hi
        while hi - lo > rtol * hi:
            mid = 0.5 * (lo + hi)
            if self(mid) < y:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------


def sup_norm(u: InputSignal, t_end: float, grid_step: float) -> float:
    """``sup |u(t)|`` over a grid on ``[0, t_end]`` that includes every breakpoint.

    Exact for piecewise-constant signals.
    """
    if grid_step <= 0:
        raise ArgumentError("grid_step must be positive")
    if u.kind == "zero":
        return 0.0
    best = 0.0
    for lo, hi in knot_pieces(0.0, t_end, u.breakpoints):
        for t in segment_points(lo, hi, grid_step):
            best = max(best, u.magnitude(t))
    return best


def sigma_rho_norm(u: InputSignal, seq: ImpulseSequence, rho: KFunction, t_end: float,
                   grid_step: float, t_start: float = 0.0) -> float:
    """Horizon-truncated ``int rho(|u|) ds + sum_{tau in sigma} rho(|u(tau)|)``.

    The integral runs over ``[t_start, t_end]`` (trapezoid, split at impulse
    times and signal breakpoints); the sum over impulses in ``(t_start, t_end]``.
    """
    if grid_step <= 0:
        raise ArgumentError("grid_step must be positive")
    seq.check_horizon(t_end)
    if u.kind == "zero":
        return 0.0
    knots = tuple(seq.times) + u.breakpoints
    integral = trapezoid_split(lambda s: rho(u.magnitude(s)), t_start, t_end, grid_step, knots)
    jumps = sum(rho(u.magnitude(tau)) for tau in seq.within(t_start, t_end))
    return float(integral + jumps)
