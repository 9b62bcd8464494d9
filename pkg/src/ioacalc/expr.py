"""Tiny arithmetic expressions for declared functions (``c + b + 1``, ``abs(b - 3)``).

Expressions are parsed with :mod:`ast` and evaluated over a whitelist of
node types; nothing else from Python is reachable.
"""
from __future__ import annotations

import ast
import operator
from typing import Callable

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.FloorDiv: operator.floordiv,
    ast.Mod: operator.mod,
    ast.Pow: operator.pow,
}
_CMPOPS = {
    ast.Eq: operator.eq,
    ast.NotEq: operator.ne,
    ast.Lt: operator.lt,
    ast.LtE: operator.le,
    ast.Gt: operator.gt,
    ast.GtE: operator.ge,
}
_FUNCS = {"abs": abs, "min": min, "max": max}
MAX_EXPONENT = 64
MAX_LENGTH = 2000


class ExprError(Exception):
    pass


def _check(node: ast.AST, params: set) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, params)
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, int) or isinstance(node.value, bool):
            raise ExprError(f"only integer constants are allowed, got {node.value!r}")
    elif isinstance(node, ast.Name):
        if node.id not in params:
            raise ExprError(f"unknown name {node.id!r}")
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExprError(f"operator {type(node.op).__name__} not allowed")
        _check(node.left, params)
        _check(node.right, params)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.USub, ast.UAdd)):
            raise ExprError("only unary minus and plus are allowed")
        _check(node.operand, params)
    elif isinstance(node, ast.Compare):
        if any(type(op) not in _CMPOPS for op in node.ops):
            raise ExprError("comparison not allowed")
        _check(node.left, params)
        for c in node.comparators:
            _check(c, params)
    elif isinstance(node, ast.IfExp):
        for n in (node.test, node.body, node.orelse):
            _check(n, params)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords:
            raise ExprError("only abs, min and max may be called")
        for a in node.args:
            _check(a, params)
    else:
        raise ExprError(f"{type(node).__name__} not allowed in expressions")


def _eval(node: ast.AST, env: dict):
    if isinstance(node, ast.Constant):
        return node.value
    if isinstance(node, ast.Name):
        return env[node.id]
    if isinstance(node, ast.BinOp):
        left, right = _eval(node.left, env), _eval(node.right, env)
        if isinstance(node.op, ast.Pow) and not 0 <= right <= MAX_EXPONENT:
            raise ExprError(f"exponent {right} outside 0..{MAX_EXPONENT}")
        return _BINOPS[type(node.op)](left, right)
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, env)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Compare):
        left = _eval(node.left, env)
        for op, c in zip(node.ops, node.comparators):
            right = _eval(c, env)
            if not _CMPOPS[type(op)](left, right):
                return 0
            left = right
        return 1
    if isinstance(node, ast.IfExp):
        return _eval(node.body, env) if _eval(node.test, env) else _eval(node.orelse, env)
    if isinstance(node, ast.Call):
        return _FUNCS[node.func.id](*(_eval(a, env) for a in node.args))
    raise ExprError(f"cannot evaluate {type(node).__name__}")


def compile_function(params, body: str) -> Callable:
    """Callable taking ``len(params)`` integers and returning the expression value."""
    params = tuple(params)
    if len(body) > MAX_LENGTH:
        raise ExprError(f"expression longer than {MAX_LENGTH} characters")
    try:
        tree = ast.parse(body, mode="eval")
    except SyntaxError as e:
        raise ExprError(f"bad expression {body!r}: {e.msg}") from None
    except (ValueError, RecursionError, MemoryError) as e:
        raise ExprError(f"bad expression: {e}") from None
    _check(tree, set(params))

    def fn(*args):
        if len(args) != len(params):
            raise ExprError(f"expected {len(params)} arguments, got {len(args)}")
        try:
            return _eval(tree.body, dict(zip(params, args)))
        except ZeroDivisionError:
            raise ExprError(f"division by zero in {body!r} at {args}") from None

    fn.arity = len(params)
    return fn
