"""Grid construction, fixed-step RK4 and quadrature helpers.

Every integrator in the package shares one convention: the grid of an
interval ``[a, b]`` is split at a set of knots (impulse times, signal
breakpoints), each piece is walked with a fixed step whose last substep is
shortened to land exactly on the knot, and any stage evaluated at the right
end of a piece is evaluated at the left limit (one ulp before the knot).
That makes right-continuous piecewise data (inputs, switching signals,
piecewise-constant matrices) behave exactly without special cases.
"""

from __future__ import annotations

from typing import Callable, Iterable, List

import numpy as np

_LANDING_SLACK = 1e-9


def left_of(t: float) -> float:
    """Largest float strictly below ``t``."""
    return float(np.nextafter(t, -np.inf))


def segment_points(a: float, b: float, step: float) -> np.ndarray:
    """Points ``a, a+h, a+2h, ..., b`` with the last substep shortened to land on ``b``.

    A final substep shorter than ``1e-9 * step`` is merged into the previous one.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    length = b - a
    if length <= 0:
        return np.array([a], dtype=float)
    n = int(np.floor(length / step + _LANDING_SLACK))
    pts = a + step * np.arange(n + 1, dtype=float)
    if n >= 1 and b - pts[-1] <= _LANDING_SLACK * step:
        pts[-1] = b
    else:
        pts = np.append(pts, b)
    return pts


def knot_pieces(a: float, b: float, knots: Iterable[float]) -> List[tuple]:
    """Split ``[a, b]`` at the knots lying strictly inside it."""
    inner = sorted({float(k) for k in knots if a < k < b})
    edges = [a] + inner + [b]
    return [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]


def rk4_step(fun: Callable, t: float, y: np.ndarray, h: float, t_end_left: bool) -> np.ndarray:
    """One classical RK4 step for ``y' = fun(t, y)``.

    With ``t_end_left`` the final stage is evaluated at the left limit of ``t + h``.
    """
    half = t + 0.5 * h
    t_last = left_of(t + h) if t_end_left else t + h
    k1 = fun(t, y)
    k2 = fun(half, y + 0.5 * h * k1)
    k3 = fun(half, y + 0.5 * h * k2)
    k4 = fun(t_last, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def trapezoid_split(fun: Callable[[float], float], a: float, b: float, step: float,
                    knots: Iterable[float] = ()) -> float:
    """Composite trapezoid of a scalar function over ``[a, b]``.

    The interval is split at the knots; the right endpoint of each piece is
    sampled at its left limit so right-continuous jumps are integrated exactly.
    """
    if b <= a:
        return 0.0
    total = 0.0
    for lo, hi in knot_pieces(a, b, knots):
        pts = segment_points(lo, hi, step)
        vals = np.array([fun(p) for p in pts[:-1]] + [fun(left_of(pts[-1]))], dtype=float)
        total += float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(pts)))
    return total


def spectral_norm(B) -> float:
    """Induced Euclidean norm ``max_{|xi|=1} |B xi|``."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.size == 0:
        return 0.0
    return float(np.linalg.norm(B, 2))
