"""Linear impulsive systems, transition matrices and exponential envelopes.

The transition matrix follows the closed-right convention: ``Phi(t, s)``
contains the jump at ``t`` when ``t`` is an impulse time and never the jump
at ``s``.  With that convention ``Phi(t, s) = Phi(t, r) Phi(r, s)`` holds for
every ``s <= r <= t``, impulse times included.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ._numerics import knot_pieces, left_of, rk4_step, segment_points, spectral_norm
from .errors import ArgumentError, ConfigurationError, NotExponentiallyStableError
from .timebase import ImpulseSequence, count_impulses

__all__ = [
    "MatrixFunction",
    "LinearImpulsiveSystem",
    "Certificate",
    "AffineDriving",
    "EnvelopeFit",
    "transition_matrix",
    "variation_of_constants",
    "semigroup_check",
    "estimate_envelope",
    "default_pair_grid",
    "envelope_distance",
    "spectral_norm",
]

STRONG = "strong"
WEAK = "weak"


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MatrixFunction:
    """A bounded ``t -> R^{n x n}``: constant, piecewise constant or a callable."""

    kind: str
    n: int
    matrix: Optional[np.ndarray] = field(default=None, compare=False)
    breakpoints: Tuple[float, ...] = ()
    matrices: Optional[np.ndarray] = field(default=None, compare=False)
    func: Optional[Callable[[float], np.ndarray]] = field(default=None, compare=False)

    @classmethod
    def constant(cls, matrix) -> "MatrixFunction":
        mat = np.atleast_2d(np.asarray(matrix, dtype=float)).copy()
        if mat.shape[0] != mat.shape[1]:
            raise ArgumentError(f"matrix must be square, got shape {mat.shape}")
        mat.setflags(write=False)
        return cls("constant", mat.shape[0], matrix=mat)

    @classmethod
    def piecewise_constant(cls, breakpoints: Sequence[float], matrices) -> "MatrixFunction":
        bps = tuple(float(b) for b in breakpoints)
        mats = np.asarray(matrices, dtype=float)
        if mats.ndim == 1:
            mats = mats[:, None, None]
        if mats.shape[0] != len(bps) + 1 or mats.shape[1] != mats.shape[2]:
            raise ArgumentError("need len(breakpoints)+1 square matrices")
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise ArgumentError("breakpoints must be strictly increasing")
        mats.setflags(write=False)
        return cls("piecewise", mats.shape[1], breakpoints=bps, matrices=mats)

    @classmethod
    def from_callable(cls, func: Callable[[float], object], n: int,
                      breakpoints: Sequence[float] = ()) -> "MatrixFunction":
        return cls("expression", int(n), breakpoints=tuple(float(b) for b in breakpoints), func=func)

    @classmethod
    def coerce(cls, obj) -> "MatrixFunction":
        if isinstance(obj, MatrixFunction):
            return obj
        if callable(obj):
            probe = np.atleast_2d(np.asarray(obj(0.0), dtype=float))
            return cls.from_callable(obj, probe.shape[0])
        return cls.constant(obj)

    def __call__(self, t: float) -> np.ndarray:
        if self.kind == "constant":
            return self.matrix
        if self.kind == "piecewise":
            return self.matrices[bisect.bisect_right(self.breakpoints, t)]
        return np.asarray(self.func(t), dtype=float).reshape(self.n, self.n)


@dataclass(frozen=True)
class LinearImpulsiveSystem:
    """``x' = A(t) x`` between impulses, ``x(tau) = R(tau) x(tau^-)`` at impulses.

    ``R`` may be a :class:`MatrixFunction`, a constant matrix, a callable or a
    ``{tau: matrix}`` mapping that covers every impulse time.
    """

    A: MatrixFunction
    R: MatrixFunction
    seq: ImpulseSequence

    def __post_init__(self):
        A = MatrixFunction.coerce(self.A)
        R = self.R
        if isinstance(R, dict):
            table = {float(k): np.atleast_2d(np.asarray(v, dtype=float)) for k, v in R.items()}
            missing = [tau for tau in self.seq.times if tau not in table]
            if missing:
                raise ConfigurationError(f"jump matrix undefined at impulse times {missing[:5]}")

            def lookup(t, _table=table):
                return _table[float(t)]

            R = MatrixFunction.from_callable(lookup, A.n)
        else:
            R = MatrixFunction.coerce(R)
        if R.n != A.n:
            raise ConfigurationError(f"dimension mismatch: A is {A.n}x{A.n}, R is {R.n}x{R.n}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "R", R)

    @property
    def n(self) -> int:
        return self.A.n


@dataclass(frozen=True)
class Certificate:
    """Exponential envelope ``||Phi(t,s)|| <= K exp(-lam * d)``.

    ``d = t - s + n_(s,t]`` for the strong flavor and ``d = t - s`` for the weak one.
    """

    K: float
    lam: float
    flavor: str = STRONG
    provenance: str = ""

    def __post_init__(self):
        if self.flavor not in (STRONG, WEAK):
            raise ArgumentError(f"flavor must be 'strong' or 'weak', got {self.flavor!r}")
        if not self.K >= 1:
            raise ArgumentError(f"K must be >= 1, got {self.K}")
        if not self.lam > 0:
            raise ArgumentError(f"lambda must be positive, got {self.lam}")
        object.__setattr__(self, "K", float(self.K))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def strong(self) -> bool:
        return self.flavor == STRONG

    def bound(self, d) -> np.ndarray:
        return self.K * np.exp(-self.lam * np.asarray(d, dtype=float))


@dataclass(frozen=True)
class AffineDriving:
    """Flow forcing ``v(t)`` and jump forcing ``w(tau)``; either may be omitted."""

    v: Optional[Callable[[float], np.ndarray]] = None
    w: Optional[Callable[[float], np.ndarray]] = None
    breakpoints: Tuple[float, ...] = ()


def envelope_distance(seq: ImpulseSequence, s: float, t: float, flavor: str) -> float:
    """``t - s + n_(s,t]`` (strong) or ``t - s`` (weak)."""
    if flavor == STRONG:
        return t - s + count_impulses(seq, s, t)
    return t - s


# ---------------------------------------------------------------------------
# Transition matrices
# ---------------------------------------------------------------------------


def _check_window(sys: LinearImpulsiveSystem, s: float, t: float, step: float) -> None:
    if t < s:
        raise ArgumentError(f"need s <= t, got s={s}, t={t}")
    if s < 0:
        raise ArgumentError("times must be nonnegative")
    if step <= 0:
        raise ArgumentError("step must be positive")
    sys.seq.check_horizon(t)


def _flow(A: MatrixFunction, a: float, b: float, step: float, X: np.ndarray) -> np.ndarray:
    """Advance ``X' = A(t) X`` from ``a`` to ``b`` (RK4, pieces split at A's breakpoints)."""
    if b <= a:
        return X

    def rhs(t, Y):
        return A(t) @ Y

    for lo, hi in knot_pieces(a, b, A.breakpoints):
        pts = segment_points(lo, hi, step)
        last = len(pts) - 2
        for k in range(len(pts) - 1):
            X = rk4_step(rhs, pts[k], X, pts[k + 1] - pts[k], t_end_left=(k == last))
    return X


def transition_matrix(sys: LinearImpulsiveSystem, s: float, t: float, step: float = 1e-3) -> np.ndarray:
    """``Phi(t, s)``: flow blocks and jump matrices multiplied in chronological order.

    The jump at ``t`` is applied when ``t`` is an impulse time.
    """
    _check_window(sys, s, t, step)
    X = np.eye(sys.n)
    cur = s
    for tau in sys.seq.within(s, t):
        X = _flow(sys.A, cur, tau, step, X)
        X = sys.R(tau) @ X
        cur = tau
    return _flow(sys.A, cur, t, step, X)


def semigroup_check(sys: LinearImpulsiveSystem, s: float, r: float, t: float,
                    step: float = 1e-3) -> float:
    """``max |Phi(t,s) - Phi(t,r) Phi(r,s)|`` entrywise."""
    if not s <= r <= t:
        raise ArgumentError("need s <= r <= t")
    full = transition_matrix(sys, s, t, step)
    split = transition_matrix(sys, r, t, step) @ transition_matrix(sys, s, r, step)
    return float(np.max(np.abs(full - split)))


def _vec(fun, t, n):
    if fun is None:
        return np.zeros(n)
    return np.atleast_1d(np.asarray(fun(t), dtype=float)).reshape(n)


def variation_of_constants(sys: LinearImpulsiveSystem, drive: AffineDriving, t0: float, x0,
                           t: float, step: float = 1e-3) -> np.ndarray:
    """Evaluate ``Phi(t,t0) x0 + int Phi(t,s) v(s) ds + sum_{s in sigma, (t0,t]} Phi(t,s) w(s)``.

    ``Phi(t, s)`` is accumulated backward from ``t`` on the same grid the
    forward transition matrix uses, so each grid node costs one RK4 step.
    The integral is a trapezoid rule on that grid.
    """
    _check_window(sys, t0, t, step)
    n = sys.n
    x0 = np.atleast_1d(np.asarray(x0, dtype=float)).reshape(n)
    impulses = sys.seq.within(t0, t)
    knots = tuple(impulses) + sys.A.breakpoints + tuple(drive.breakpoints)
    impulse_set = set(impulses)

    def rhs(tt, Y):
        return sys.A(tt) @ Y

    G_hi = np.eye(n)  # Phi(t, hi)
    integral = np.zeros(n)
    jumps = np.zeros(n)
    for lo, hi in reversed(knot_pieces(t0, t, knots)):
        if hi in impulse_set:
            jumps += G_hi @ _vec(drive.w, hi, n)
            G = G_hi @ sys.R(hi)
        else:
            G = G_hi
        pts = segment_points(lo, hi, step)
        last = len(pts) - 2
        v_right = _vec(drive.v, left_of(hi), n)
        for k in range(last, -1, -1):
            h = pts[k + 1] - pts[k]
            S = rk4_step(rhs, pts[k], np.eye(n), h, t_end_left=(k == last))
            G_left = G @ S
            v_left = _vec(drive.v, pts[k], n)
            integral += 0.5 * h * (G_left @ v_left + G @ v_right)
            G, v_right = G_left, v_left
        G_hi = G
    return G_hi @ x0 + integral + jumps


# ---------------------------------------------------------------------------
# Envelope estimation
# ---------------------------------------------------------------------------


def default_pair_grid(seq: ImpulseSequence, random_pairs: int = 20, seed: int = 0) -> List[Tuple[float, float]]:
    """Impulse-anchored pairs plus seeded random off-impulse pairs.

    Anchored pairs are ``(0, tau_j)``, ``(tau_i, tau_j)`` for ``i < j`` and
    ``(tau_i^-, tau_j)`` for ``i <= j``.  Starting just before an impulse
    counts that jump in ``d`` at almost no elapsed time, which is where a
    contracting jump binds the overshoot ``K``.
    """
    tau = seq.times
    pairs = [(0.0, tj) for tj in tau]
    pairs += [(tau[i], tau[j]) for i in range(len(tau)) for j in range(i + 1, len(tau))]
    pairs += [(left_of(tau[i]), tau[j]) for i in range(len(tau)) for j in range(i, len(tau))
              if left_of(tau[i]) > 0.0]
    rng = np.random.default_rng(seed)
    horizon = seq.horizon
    added = 0
    while added < random_pairs and horizon > 0:
        s, t = np.sort(rng.uniform(0.0, horizon, size=2))
        if s == t or s in seq or t in seq:
            continue
        pairs.append((float(s), float(t)))
        added += 1
    return pairs


def _pair_norms(sys: LinearImpulsiveSystem, pairs: Sequence[Tuple[float, float]], step: float) -> np.ndarray:
    """``||Phi(t, s)||`` for every pair, reusing blocks between consecutive pair endpoints."""
    knots = sorted({float(p) for pair in pairs for p in pair})
    index = {k: i for i, k in enumerate(knots)}
    blocks = [transition_matrix(sys, knots[i], knots[i + 1], step) for i in range(len(knots) - 1)]
    by_start: Dict[int, List[int]] = {}
    for idx, (s, t) in enumerate(pairs):
        if t < s:
            raise ArgumentError(f"pair ({s}, {t}) is reversed")
        by_start.setdefault(index[float(s)], []).append(idx)
    norms = np.empty(len(pairs))
    for start, members in sorted(by_start.items()):
        wanted: Dict[int, List[int]] = {}
        for idx in members:
            wanted.setdefault(index[float(pairs[idx][1])], []).append(idx)
        X = np.eye(sys.n)
        stop = max(wanted)
        for k in range(start, stop + 1):
            if k > start:
                X = blocks[k - 1] @ X
            for idx in wanted.get(k, ()):
                norms[idx] = spectral_norm(X)
    return norms


@dataclass
class EnvelopeFit:
    """Result of :func:`estimate_envelope`.

    ``table`` holds ``(lambda, K(lambda))`` for every grid rate, ``admissible``
    flags the rates that passed the cap and the saturation test, and
    ``near_pairs`` lists the pairs lying within 1% of the chosen envelope.
    """

    certificate: Certificate
    table: np.ndarray
    admissible: np.ndarray
    pairs: List[Tuple[float, float]]
    distances: np.ndarray
    norms: np.ndarray
    near_pairs: List[Tuple[float, float]]
    min_residual: float
    note: str = "fitted envelope over a finite pair grid; not a proof"


def estimate_envelope(systems: Union[LinearImpulsiveSystem, Sequence[LinearImpulsiveSystem]],
                      flavor: str = STRONG, pairs=None, step: float = 1e-3, K_cap: float = 1e3,
                      lambda_grid: Optional[Sequence[float]] = None, random_pairs: int = 20,
                      seed: int = 0) -> EnvelopeFit:
    """Fit ``(K, lambda)`` so that ``||Phi(t,s)|| <= K exp(-lambda d)`` on a pair grid.

    For each rate on a geometric grid (200 points over ``[1e-3, 10]`` by
    default) ``K(lambda) = max ||Phi|| exp(lambda d)`` over the pairs.  A rate
    is admissible when ``K(lambda) <= K_cap`` and the envelope is saturated:
    the pairs in the longer half of the observed ``d`` range do not need a
    larger ``K`` than the shorter half.  Without the saturation test any
    finite horizon could be covered by trading decay for overshoot.  The
    largest admissible rate is returned.

    Passing several systems fits one envelope valid for all of them.
    """
    if flavor not in (STRONG, WEAK):
        raise ArgumentError(f"flavor must be 'strong' or 'weak', got {flavor!r}")
    if isinstance(systems, LinearImpulsiveSystem):
        systems = [systems]
    grid = np.geomspace(1e-3, 10.0, 200) if lambda_grid is None else np.asarray(lambda_grid, dtype=float)

    all_pairs: List[Tuple[float, float]] = []
    dists, norms = [], []
    for k, sys in enumerate(systems):
        sys_pairs = default_pair_grid(sys.seq, random_pairs, seed + k) if pairs is None else list(pairs)
        all_pairs += sys_pairs
        norms.append(_pair_norms(sys, sys_pairs, step))
        dists.append(np.array([envelope_distance(sys.seq, s, t, flavor) for s, t in sys_pairs]))
    d = np.concatenate(dists)
    nrm = np.concatenate(norms)
    if d.size == 0:
        raise ArgumentError("empty pair grid")

    # ratio[i, p] = ||Phi_p|| exp(lambda_i d_p)
    log_ratio = np.log(np.maximum(nrm, 1e-300))[None, :] + grid[:, None] * d[None, :]
    K_of = np.maximum(1.0, np.exp(np.minimum(np.max(log_ratio, axis=1), 700.0)))
    long_mask = d > 0.5 * d.max()
    if long_mask.any() and (~long_mask).any():
        long_max = np.max(log_ratio[:, long_mask], axis=1)
        short_max = np.maximum(0.0, np.max(log_ratio[:, ~long_mask], axis=1))
        saturated = long_max <= short_max + 1e-9
    else:
        saturated = np.ones_like(grid, dtype=bool)
    admissible = (K_of <= K_cap) & saturated
    if not admissible.any():
        raise NotExponentiallyStableError(
            f"no decay rate in [{grid.min():.3g}, {grid.max():.3g}] gives a saturated "
            f"{flavor} envelope with K <= {K_cap:g}"
        )
    best = int(np.flatnonzero(admissible).max())
    lam = float(grid[best])
    K = float(K_of[best])
    cert = Certificate(K, lam, flavor, provenance=(
        f"fitted: max admissible rate on a {grid.size}-point grid, K_cap={K_cap:g}, "
        f"{d.size} pairs, step={step:g}"
    ))
    bound = cert.bound(d)
    residual = bound - nrm
    near = [all_pairs[i] for i in np.flatnonzero(nrm >= 0.99 * bound)]
    return EnvelopeFit(
        certificate=cert,
        table=np.column_stack([grid, K_of]),
        admissible=admissible,
        pairs=all_pairs,
        distances=d,
        norms=nrm,
        near_pairs=near,
        min_residual=float(residual.min()),
    )
