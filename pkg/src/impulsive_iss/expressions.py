"""A deliberately small expression language for system files.

Grammar: numbers, ``t``, ``x[i]`` and ``u[j]`` (0-based), ``pi``, ``e``,
named parameters supplied by the caller,
``+ - * / **``, unary ``+``/``-``, parentheses and the functions ``sin``,
``cos``, ``exp``, ``abs`` and ``sqrt``.  Expressions are parsed with
:mod:`ast` and every node is checked against this whitelist before being
compiled, so nothing else (attribute access, names, calls) can run.
"""

from __future__ import annotations

import ast
import math
from typing import Callable, Sequence, Union

import numpy as np

from .errors import ConfigurationError

__all__ = ["compile_scalar", "compile_vector", "compile_matrix", "ExpressionError"]

_FUNCS = {"sin": math.sin, "cos": math.cos, "exp": math.exp, "abs": abs, "sqrt": math.sqrt}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNOPS = (ast.UAdd, ast.USub)


class ExpressionError(ConfigurationError):
    pass


def _check(node: ast.AST, src: str, allow_state: bool, n: int, m: int, names=frozenset()) -> None:
    if isinstance(node, ast.Expression):
        return _check(node.body, src, allow_state, n, m, names)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"{src!r}: only numeric literals are allowed")
        return None
    if isinstance(node, ast.BinOp):
        if not isinstance(node.op, _BINOPS):
            raise ExpressionError(f"{src!r}: operator {type(node.op).__name__} not allowed")
        _check(node.left, src, allow_state, n, m, names)
        return _check(node.right, src, allow_state, n, m, names)
    if isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, _UNOPS):
            raise ExpressionError(f"{src!r}: operator {type(node.op).__name__} not allowed")
        return _check(node.operand, src, allow_state, n, m, names)
    if isinstance(node, ast.Name):
        if node.id == "t" or node.id in _CONSTS or node.id in names:
            return None
        raise ExpressionError(f"{src!r}: unknown name {node.id!r}")
    if isinstance(node, ast.Subscript):
        base = node.value
        if not (isinstance(base, ast.Name) and base.id in ("x", "u")):
            raise ExpressionError(f"{src!r}: only x[i] and u[j] may be indexed")
        if not allow_state:
            raise ExpressionError(f"{src!r}: {base.id}[...] not allowed here (only t)")
        idx = node.slice
        if not (isinstance(idx, ast.Constant) and isinstance(idx.value, int) and not isinstance(idx.value, bool)):
            raise ExpressionError(f"{src!r}: index of {base.id} must be an integer literal")
        size = n if base.id == "x" else m
        if not 0 <= idx.value < size:
            raise ExpressionError(f"{src!r}: index {base.id}[{idx.value}] out of range (size {size})")
        return None
    if isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ExpressionError(f"{src!r}: only {sorted(_FUNCS)} may be called")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{src!r}: {node.func.id} takes exactly one argument")
        return _check(node.args[0], src, allow_state, n, m, names)
    raise ExpressionError(f"{src!r}: syntax element {type(node).__name__} not allowed")


def _compile(src: Union[str, float, int], allow_state: bool, n: int, m: int, params=None):
    if isinstance(src, (int, float)) and not isinstance(src, bool):
        return compile(repr(float(src)), "<expr>", "eval")
    if not isinstance(src, str):
        raise ExpressionError(f"expected an expression string or number, got {type(src).__name__}")
    try:
        tree = ast.parse(src.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"{src!r}: {exc.msg}") from None
    _check(tree, src, allow_state, n, m, frozenset(params or ()))
    return compile(tree, "<expr>", "eval")


def _globals(params):
    reserved = {"t", "x", "u", *_FUNCS, *_CONSTS}
    clash = reserved.intersection(params or ())
    if clash:
        raise ExpressionError(f"parameter names {sorted(clash)} are reserved")
    return {"__builtins__": {}, **_FUNCS, **_CONSTS, **{k: float(v) for k, v in (params or {}).items()}}


def compile_scalar(src, n: int = 0, m: int = 0, state: bool = True, params=None) -> Callable:
    """Compile one expression into ``fn(t, x, u) -> float`` (``fn(t)`` when ``state=False``)."""
    glb = _globals(params)
    code = _compile(src, state, n, m, params)
    if state:
        return lambda t, x, u: float(eval(code, glb, {"t": t, "x": x, "u": u}))
    return lambda t: float(eval(code, glb, {"t": t}))


def compile_vector(srcs: Sequence, n: int, m: int, params=None) -> Callable:
    """Compile ``n`` expressions into ``fn(t, x, u) -> ndarray``."""
    if len(srcs) != n:
        raise ExpressionError(f"expected {n} component expressions, got {len(srcs)}")
    glb = _globals(params)
    codes = [_compile(s, True, n, m, params) for s in srcs]

    def fn(t, x, u):
        env = {"t": t, "x": x, "u": u}
        return np.array([eval(c, glb, env) for c in codes], dtype=float)

    return fn


def compile_matrix(rows: Sequence[Sequence], n: int, params=None):
    """Compile an ``n x n`` table of numbers or ``t``-expressions.

    Returns a constant ``ndarray`` when every entry is numeric, otherwise a
    callable ``fn(t) -> ndarray``.
    """
    if len(rows) != n or any(len(r) != n for r in rows):
        raise ExpressionError(f"expected a {n}x{n} matrix")
    if all(isinstance(v, (int, float)) and not isinstance(v, bool) for r in rows for v in r):
        return np.asarray(rows, dtype=float)
    glb = _globals(params)
    codes = [[_compile(v, False, n, 0, params) for v in r] for r in rows]
    if not any(_uses_t(v) for r in rows for v in r):
        return np.array([[eval(c, glb, {}) for c in r] for r in codes], dtype=float)

    def fn(t):
        env = {"t": t}
        return np.array([[eval(c, glb, env) for c in r] for r in codes], dtype=float)

    return fn


def _uses_t(src) -> bool:
    if not isinstance(src, str):
        return False
    return any(isinstance(node, ast.Name) and node.id == "t" for node in ast.walk(ast.parse(src.strip(), mode="eval")))
