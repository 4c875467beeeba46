"""Empirical checks of trajectory bounds and of the constructions behind them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from ._numerics import knot_pieces, left_of, segment_points, trapezoid_split
from .certificates import IssReport
from .errors import EscapeError, PreconditionError
from .gswl import POST, PRE, GswlSystem, Trajectory, _ball, simulate
from .linear_core import STRONG
from .timebase import ImpulseSequence, InputSignal, KFunction, harmonic_sequence, sup_norm

__all__ = [
    "BoundCheck",
    "MonteCarloReport",
    "Example1Result",
    "check_iss_bound",
    "check_iiss_bound",
    "construct_selection",
    "reflection_map",
    "gronwall_check",
    "example1_divergence",
    "monte_carlo_iss",
    "random_piecewise_input",
    "FALSIFY_RTOL",
]

# a bound counts as falsified only when lhs - rhs > FALSIFY_RTOL * (1 + rhs)
FALSIFY_RTOL = 1e-7


@dataclass
class BoundCheck:
    kind: str
    violations: List[Tuple[float, float, float, float]]
    passed: bool
    worst_margin: float
    series: Optional[dict] = None
    extras: dict = field(default_factory=dict)


def _assemble(kind, t, lhs, rhs, keep_series, extras=None) -> BoundCheck:
    margin = rhs - lhs
    bad = (lhs - rhs) > FALSIFY_RTOL * (1.0 + np.abs(rhs))
    violations = [(float(t[i]), float(lhs[i]), float(rhs[i]), float(margin[i]))
                  for i in np.flatnonzero(bad)]
    series = {"t": t, "lhs": lhs, "rhs": rhs} if keep_series else None
    worst = float(margin.min()) if margin.size else math.inf
    return BoundCheck(kind, violations, not violations, worst, series, extras or {})


def _distances(traj: Trajectory, seq: ImpulseSequence, flavor: str) -> np.ndarray:
    """``t - t0 (+ n_(t0,t])`` per sample; pre-jump rows exclude the impulse at their own time."""
    elapsed = traj.t - traj.t0
    if flavor != STRONG:
        return elapsed
    tau = seq.array
    counts = np.searchsorted(tau, traj.t, side="right") - np.searchsorted(tau, traj.t0, side="right")
    counts = counts - (traj.kind == PRE)
    return elapsed + counts


def check_iss_bound(traj: Trajectory, seq: ImpulseSequence, beta: Callable, gain: Optional[Callable] = None,
                    u: Optional[InputSignal] = None, flavor: str = STRONG, grid_step: float = 1e-3,
                    keep_series: bool = False) -> BoundCheck:
    """``|x(t)| <= beta(|x(t0)|, d) + gain(||u||_inf)`` at every sample, pre- and post-jump values included.

    ``beta`` and ``gain`` must accept numpy arrays; ``gain=None`` checks the
    zero-input envelope only.
    """
    u = traj.u if u is None else u
    d = _distances(traj, seq, flavor)
    x0 = float(np.linalg.norm(traj.x0))
    unorm = 0.0 if u is None else sup_norm(u, traj.t_end, grid_step)
    rhs = np.asarray(beta(x0, d), dtype=float) * np.ones_like(d)
    if gain is not None:
        rhs = rhs + float(np.asarray(gain(unorm)))
        kind = "S-ISS" if flavor == STRONG else "W-ISS"
    else:
        kind = "S-0-GUES" if flavor == STRONG else "W-0-GUES"
    return _assemble(kind, traj.t, traj.norms, rhs, keep_series, {"u_sup": unorm})


def running_sigma_norm(traj: Trajectory, seq: ImpulseSequence, u: Optional[InputSignal],
                       rho: KFunction, grid_step: float = 1e-3) -> np.ndarray:
    """``||u||_{sigma,rho}`` restricted to ``(t0, t]`` at every trajectory sample.

    Pre-jump rows exclude the jump term at their own time.
    """
    if u is None or u.kind == "zero":
        return np.zeros_like(traj.t)
    grid = np.unique(traj.t)
    integrand = lambda s: float(rho(u.magnitude(s)))  # noqa: E731
    pieces = [trapezoid_split(integrand, a, b, grid_step, u.breakpoints) for a, b in zip(grid[:-1], grid[1:])]
    cum = np.concatenate([[0.0], np.cumsum(pieces)])
    taus = np.asarray(seq.within(traj.t0, traj.t_end), dtype=float)
    jump_vals = np.array([float(rho(u.magnitude(tau))) for tau in taus])
    cum_jump = np.concatenate([[0.0], np.cumsum(jump_vals)])
    idx = np.where(traj.kind == PRE,
                   np.searchsorted(taus, traj.t, side="left"),
                   np.searchsorted(taus, traj.t, side="right"))
    return cum[np.searchsorted(grid, traj.t)] + cum_jump[idx]


def check_iiss_bound(traj: Trajectory, seq: ImpulseSequence, report: IssReport,
                     u: Optional[InputSignal] = None, rho: Optional[KFunction] = None,
                     grid_step: float = 1e-3, keep_series: bool = False) -> BoundCheck:
    """``|x(t)| <= beta(|x(t0)|, d) + rho(||u||_{sigma,eta})`` with the report's integral-ISS functions.

    The input norm is accumulated over ``(t0, t]`` and uses the bound's
    ``eta`` unless ``rho`` is given.
    """
    if report.iiss is None:
        raise PreconditionError("report has no integral-ISS part")
    u = traj.u if u is None else u
    rho = report.bound.eta if rho is None else rho
    d = _distances(traj, seq, STRONG)
    x0 = float(np.linalg.norm(traj.x0))
    norms = running_sigma_norm(traj, seq, u, rho, grid_step)
    rhs = report.iiss.beta(x0, d) + report.iiss.rho(norms)
    return _assemble("S-iISS", traj.t, traj.norms, rhs, keep_series,
                     {"sigma_norm_final": float(norms[-1]) if norms.size else 0.0})


# ---------------------------------------------------------------------------
# Matrix selection behind the linear rewriting of perturbations
# ---------------------------------------------------------------------------


def reflection_map(x_hat: np.ndarray, g_hat: np.ndarray) -> np.ndarray:
    """Orthogonal ``U`` with ``U x_hat = g_hat`` for unit vectors.

    One Householder reflection when the vectors point apart, two (via
    ``-g_hat``) when they are close, so the reflection vector never cancels.
    """
    n = x_hat.size
    eye = np.eye(n)
    if float(x_hat @ g_hat) <= 0.0:
        v = x_hat - g_hat
        return eye - 2.0 * np.outer(v, v) / float(v @ v)
    v = x_hat + g_hat  # H1 x_hat = -g_hat
    H1 = eye - 2.0 * np.outer(v, v) / float(v @ v)
    H2 = eye - 2.0 * np.outer(g_hat, g_hat)  # H2 (-g_hat) = g_hat
    return H2 @ H1


def construct_selection(gval, xval, Ncap: float, hcap: float) -> np.ndarray:
    """Matrix ``B`` with ``||B|| <= Ncap`` and ``|g - B x| <= hcap``, given ``|g| <= Ncap |x| + hcap``.

    ``B = 0`` if ``g`` or ``x`` vanishes; otherwise ``B = min(|g|/|x|, Ncap) U``
    with ``U`` orthogonal mapping ``x/|x|`` onto ``g/|g|``.
    """
    g = np.atleast_1d(np.asarray(gval, dtype=float))
    x = np.atleast_1d(np.asarray(xval, dtype=float))
    if Ncap < 0 or hcap < 0:
        raise PreconditionError("Ncap and hcap must be nonnegative")
    ng, nx = float(np.linalg.norm(g)), float(np.linalg.norm(x))
    if ng > Ncap * nx + hcap + 1e-12 * (1.0 + ng):
        raise PreconditionError(f"|g| = {ng:.12g} exceeds Ncap*|x| + hcap = {Ncap * nx + hcap:.12g}")
    n = x.size
    if ng == 0.0 or nx == 0.0:
        return np.zeros((g.size, n))
    U = reflection_map(x / nx, g / ng)
    return min(ng / nx, Ncap) * U


# ---------------------------------------------------------------------------
# Impulsive Gronwall inequality
# ---------------------------------------------------------------------------


def _samples_of(y, t0, t_end, seq, grid_step):
    if isinstance(y, Trajectory):
        vals = y.x[:, 0] if y.x.shape[1] == 1 else y.norms
        return y.t, vals, y.kind
    ts, vals, kinds = [t0], [float(y(t0))], [0]
    impulses = set(seq.within(t0, t_end))
    for lo, hi in knot_pieces(t0, t_end, impulses):
        pts = segment_points(lo, hi, grid_step)
        for p in pts[1:-1]:
            ts.append(p); vals.append(float(y(p))); kinds.append(0)  # noqa: E702
        if hi in impulses:
            ts.append(hi); vals.append(float(y(left_of(hi)))); kinds.append(PRE)  # noqa: E702
            ts.append(hi); vals.append(float(y(hi))); kinds.append(POST)  # noqa: E702
        else:
            ts.append(hi); vals.append(float(y(hi))); kinds.append(0)  # noqa: E702
    return np.asarray(ts), np.asarray(vals), np.asarray(kinds)


def gronwall_check(p: Callable, a: Callable, b: Callable, seq: ImpulseSequence,
                   y: Union[Callable, Trajectory], t0: float, t_end: float,
                   grid_step: float = 1e-3) -> BoundCheck:
    """Check ``y(t) <= p(t) exp(int_{t0}^t a) prod_{s in sigma, (t0,t]} (1 + b(s))``.

    The hypothesis ``y <= p + int a y + sum b y(s^-)`` is evaluated as well and
    reported in ``extras`` (trapezoid on the sample grid), so the function can
    serve as an oracle in both directions.  ``y`` is a callable (right
    continuous) or a :class:`Trajectory`, whose samples are then used as the grid.
    """
    ts, ys, kinds = _samples_of(y, t0, t_end, seq, grid_step)
    pv = np.array([float(p(t)) for t in ts])
    scale = max(1.0, float(np.max(np.abs(pv))))
    if np.any(np.diff(pv) < -1e-12 * scale):
        raise PreconditionError("p must be nondecreasing on [t0, t_end]")

    # int a: Simpson per grid interval (exact for the quadratures RK4 integrates)
    widths = np.diff(ts)
    inc_a = np.array([
        0.0 if w == 0 else (w / 6.0) * (a(t) + 4.0 * a(t + 0.5 * w) + a(left_of(t + w)))
        for t, w in zip(ts[:-1], widths)
    ])
    int_a = np.concatenate([[0.0], np.cumsum(inc_a)])

    log_prod = np.zeros_like(ts)
    acc = 0.0
    for i, k in enumerate(kinds):
        if k == POST:
            acc += math.log1p(float(b(ts[i])))
        log_prod[i] = acc
    rhs = pv * np.exp(int_a + log_prod)

    # hypothesis residual: p + int a*y + sum b*y(s^-) - y
    ay = np.array([float(a(t)) for t in ts]) * ys
    inc_hyp = 0.5 * widths * (ay[:-1] + ay[1:])
    jump_terms = np.zeros_like(ts)
    for i, k in enumerate(kinds):
        if k == POST:
            jump_terms[i] = float(b(ts[i])) * ys[i - 1]
    hyp = pv + np.concatenate([[0.0], np.cumsum(inc_hyp)]) + np.cumsum(jump_terms) - ys

    check = _assemble("gronwall", ts, ys, rhs, False)
    check.extras.update({
        "scale": float(max(scale, np.max(np.abs(rhs)))),
        "hypothesis_worst": float(hyp.min()),
        "hypothesis_holds": bool(hyp.min() >= -1e-6 * scale),
    })
    return check


# ---------------------------------------------------------------------------
# Weak-stability counterexample
# ---------------------------------------------------------------------------


@dataclass
class Example1Result:
    ratio: float
    first_growth_k: Optional[int]
    factors: np.ndarray
    trajectory: Trajectory

    @property
    def eventually_growing(self) -> bool:
        return self.first_growth_k is not None


def example1_divergence(delta: float, k_max: int, step: float = 1e-3) -> Example1Result:
    """Simulate ``x' = -x`` with jumps ``x <- (1 + delta) x`` on the harmonic sequence.

    Starts at ``t0 = 1, x0 = 1`` and runs to ``tau_{k_max+1}``.  The per-jump
    growth factor is ``(1 + delta) e^{-1/k}``; ``first_growth_k`` is the first
    ``k`` where it exceeds one (``None`` if it never does within ``k_max``).
    """
    if delta < 0:
        raise PreconditionError("delta must be nonnegative")
    if k_max < 1:
        raise PreconditionError("k_max must be >= 1")
    seq = harmonic_sequence(k_max + 1)
    sys = GswlSystem.linear_plus(
        [[-1.0]], [[1.0]],
        phi=lambda t, x, u: np.zeros(1),
        psi=lambda t, x, u: delta * x,
        seq=seq,
    )
    traj = simulate(sys, 1.0, [1.0], None, seq.times[-1], step)
    k = np.arange(1, k_max + 1)
    factors = (1.0 + delta) * np.exp(-1.0 / k)
    above = np.flatnonzero(factors > 1.0)
    first = int(k[above[0]]) if above.size else None
    return Example1Result(float(traj.final[0]), first, factors, traj)


# ---------------------------------------------------------------------------
# Monte Carlo harness
# ---------------------------------------------------------------------------


@dataclass
class MonteCarloReport:
    trials: int
    passed: bool
    pass_rate: float
    worst_margin: float
    failures: List[Tuple[int, str]]
    checks: List[Tuple[int, int, BoundCheck]] = field(default_factory=list)


def random_piecewise_input(rng, m: int, radius: float, seq: ImpulseSequence, t_end: float,
                           spacing: float) -> InputSignal:
    """Piecewise-constant input on a uniform grid plus the impulse times, values in a ball."""
    grid = np.arange(spacing, t_end, spacing) if spacing > 0 else np.zeros(0)
    bps = np.unique(np.concatenate([grid, seq.array[seq.array < t_end]]))
    values = _ball(rng, m, radius, bps.size + 1)
    return InputSignal.piecewise_constant(bps, values)


def monte_carlo_iss(sys: GswlSystem, report: IssReport, trial_count: int, input_radius: float,
                    state_radius: float, rng_seed: int = 0, t0: float = 0.0,
                    t_end: Optional[float] = None, step: float = 1e-2, input_spacing: float = 0.5,
                    gain_scale: float = 1.0, keep_series: bool = False) -> MonteCarloReport:
    """Seeded random trials checking the report's ISS and integral-ISS bounds.

    Trial ``k`` uses seed ``rng_seed + k`` for its initial state (in the ball
    of ``state_radius``) and its piecewise-constant input (values in the ball
    of ``input_radius``).  ``gain_scale`` multiplies the ISS gain, which is
    only useful to confirm that the harness can fail.
    """
    if report.chosen_R is not None and input_radius > report.chosen_R:
        raise PreconditionError(
            f"input_radius {input_radius:.6g} exceeds the certified input threshold {report.chosen_R:.6g}"
        )
    t_end = sys.seq.horizon if t_end is None else t_end
    failures: List[Tuple[int, str]] = []
    checks: List[Tuple[int, int, BoundCheck]] = []
    worst = math.inf
    gain = None
    if report.has_iss:
        gain = lambda s: gain_scale * report.gamma(s)  # noqa: E731
    for k in range(trial_count):
        seed = rng_seed + k
        rng = np.random.default_rng(seed)
        x0 = _ball(rng, sys.n, state_radius, 1)[0]
        u = random_piecewise_input(rng, sys.m, input_radius, sys.seq, t_end, input_spacing)
        try:
            traj = simulate(sys, t0, x0, u, t_end, step)
        except EscapeError as exc:
            failures.append((seed, f"escape: {exc}"))
            worst = -math.inf
            continue
        trial_checks = []
        if report.has_iss:
            trial_checks.append(check_iss_bound(traj, sys.seq, report.beta, gain, u, STRONG,
                                                keep_series=keep_series))
        if report.iiss is not None:
            trial_checks.append(check_iiss_bound(traj, sys.seq, report, u, keep_series=keep_series))
        for chk in trial_checks:
            checks.append((k, seed, chk))
            worst = min(worst, chk.worst_margin)
            if not chk.passed:
                first = chk.violations[0]
                failures.append((seed, f"{chk.kind} violated at t={first[0]:.6g}: "
                                       f"|x|={first[1]:.6g} > bound={first[2]:.6g}"))
    failed_seeds = {s for s, _ in failures}
    rate = 1.0 if trial_count == 0 else 1.0 - len(failed_seeds) / trial_count
    failures.sort(key=lambda item: item[0])
    return MonteCarloReport(trial_count, not failures, rate, worst, failures, checks)
