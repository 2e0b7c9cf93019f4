"""Tiny vectorized expression language for synthetic data specs.

Supports numbers, string literals, column names, ``+ - * /``, unary minus,
comparisons (which yield 0/1 indicators), ``and``/``or``/``not`` and
parentheses. Everything is evaluated column-wise with numpy.
"""
from __future__ import annotations

import ast
import operator
from typing import Mapping

import numpy as np

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}
_CMPOPS = {
    ast.Lt: operator.lt,
    ast.LtE: operator.le,
    ast.Gt: operator.gt,
    ast.GtE: operator.ge,
    ast.Eq: operator.eq,
    ast.NotEq: operator.ne,
}


class ExpressionError(ValueError):
    pass


def columns_referenced(source: str) -> set[str]:
    tree = _parse(source)
    return {node.id for node in ast.walk(tree) if isinstance(node, ast.Name)}


def _parse(source: str) -> ast.Expression:
    try:
        return ast.parse(str(source), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse expression {source!r}: {exc.msg}") from None


def evaluate(source, columns: Mapping[str, np.ndarray], n: int) -> np.ndarray:
    """Evaluate ``source`` over ``n`` rows; constants broadcast to length ``n``."""
    if isinstance(source, (int, float)):
        return np.full(n, float(source))
    tree = _parse(source)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = _eval(tree.body, columns, source)
    out = np.broadcast_to(np.asarray(value, dtype=np.float64), (n,)).copy()
    if not np.all(np.isfinite(out)):
        raise ExpressionError(f"expression {source!r} produced non-finite values")
    return out


def _eval(node, cols, source):
    if isinstance(node, ast.Constant):
        if isinstance(node.value, (int, float, str)) and not isinstance(node.value, bool):
            return node.value
        raise ExpressionError(f"unsupported literal {node.value!r} in {source!r}")
    if isinstance(node, ast.Name):
        if node.id not in cols:
            raise ExpressionError(f"unknown column {node.id!r} in {source!r}")
        return cols[node.id]
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_num(_eval(node.left, cols, source)), _num(_eval(node.right, cols, source)))
    if isinstance(node, ast.UnaryOp):
        val = _eval(node.operand, cols, source)
        if isinstance(node.op, ast.USub):
            return -_num(val)
        if isinstance(node.op, ast.UAdd):
            return _num(val)
        if isinstance(node.op, ast.Not):
            return 1.0 - (_num(val) != 0)
    if isinstance(node, ast.Compare):
        left = _eval(node.left, cols, source)
        result = True
        for op, comp in zip(node.ops, node.comparators):
            if type(op) not in _CMPOPS:
                break
            right = _eval(comp, cols, source)
            result = np.logical_and(result, _CMPOPS[type(op)](left, right))
            left = right
        else:
            return np.asarray(result, dtype=np.float64)
    if isinstance(node, ast.BoolOp):
        parts = [_num(_eval(v, cols, source)) != 0 for v in node.values]
        combine = np.logical_and if isinstance(node.op, ast.And) else np.logical_or
        out = parts[0]
        for p in parts[1:]:
            out = combine(out, p)
        return np.asarray(out, dtype=np.float64)
    raise ExpressionError(f"unsupported syntax {type(node).__name__} in {source!r}")


def _num(value):
    arr = np.asarray(value)
    if arr.dtype.kind in "OUS":
        raise ExpressionError("text values can only be compared with == or !=")
    return arr.astype(np.float64) if arr.ndim else float(arr)
