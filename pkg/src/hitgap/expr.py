"""Minimal arithmetic expressions in one variable ``x``.

Grammar: numbers, ``x``, ``+ - * / ^`` (``**`` accepted too), unary minus,
parentheses and the functions ``exp``, ``sin``, ``cos``, ``abs``.  Parsing goes
through :mod:`ast` with a whitelist, so nothing outside the grammar can be
evaluated.

>>> f = compile_expression("-x^3 + 2*x")
>>> float(f(2.0))
-4.0
"""

from __future__ import annotations

import ast
import operator
from typing import Callable

import numpy as np

from .errors import ConfigError

_FUNCS = {"exp": np.exp, "sin": np.sin, "cos": np.cos, "abs": np.abs}
_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}


def _check(node: ast.AST, source: str) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, source)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ConfigError([f"operator not allowed in {source!r}"])
        _check(node.left, source)
        _check(node.right, source)
    elif isinstance(node, ast.UnaryOp):
        if type(node.op) not in _UNOPS:
            raise ConfigError([f"operator not allowed in {source!r}"])
        _check(node.operand, source)
    elif isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ConfigError([f"unknown function in {source!r}"])
        if len(node.args) != 1 or node.keywords:
            raise ConfigError([f"functions take exactly one argument in {source!r}"])
        _check(node.args[0], source)
    elif isinstance(node, ast.Name):
        if node.id != "x":
            raise ConfigError([f"unknown name {node.id!r} in {source!r}"])
    elif isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ConfigError([f"bad literal in {source!r}"])
    else:
        raise ConfigError([f"unsupported syntax in {source!r}"])


def _eval(node: ast.AST, x):
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, x), _eval(node.right, x))
    if isinstance(node, ast.UnaryOp):
        return _UNOPS[type(node.op)](_eval(node.operand, x))
    if isinstance(node, ast.Call):
        return _FUNCS[node.func.id](_eval(node.args[0], x))
    if isinstance(node, ast.Name):
        return x
    return float(node.value)


class Expression:
    """A parsed expression, callable on scalars or numpy arrays."""

    def __init__(self, source: str):
        self.source = source
        try:
            tree = ast.parse(source.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ConfigError([f"cannot parse expression {source!r}: {exc.msg}"]) from None
        _check(tree, source)
        self._body = tree.body

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(_eval(self._body, x), x.shape).astype(float)

    def __repr__(self) -> str:
        return f"Expression({self.source!r})"


def compile_expression(source: str) -> Callable:
    return Expression(source)
