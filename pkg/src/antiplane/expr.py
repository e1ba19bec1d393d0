"""Tiny arithmetic grammar for load and coefficient expressions.

Allowed: numbers, ``x``, ``y``, ``t``, ``pi``, unary and binary ``+ - * /``,
parentheses, ``sin(.)`` and ``cos(.)``.  Anything else is rejected before
evaluation, so no Python code ever runs.
"""
from __future__ import annotations

import ast
import math

import numpy as np

VARIABLES = ("x", "y", "t")
FUNCTIONS = {"sin": np.sin, "cos": np.cos}
CONSTANTS = {"pi": math.pi}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide}


class ExpressionError(ValueError):
    pass


class Expression:
    """Compiled expression; call as ``expr(x, y, t=0.0)`` with arrays or scalars."""

    def __init__(self, text):
        self.text = text.strip()
        try:
            tree = ast.parse(self.text, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse expression {text!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body
        self.variables = sorted({n.id for n in ast.walk(tree) if isinstance(n, ast.Name) and n.id in VARIABLES})

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ExpressionError(f"unsupported literal {node.value!r} in {self.text!r}")
        elif isinstance(node, ast.Name):
            if node.id not in VARIABLES and node.id not in CONSTANTS:
                raise ExpressionError(f"unknown name {node.id!r} in {self.text!r}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError(f"unsupported operator in {self.text!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                raise ExpressionError(f"unsupported operator in {self.text!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not (isinstance(node.func, ast.Name) and node.func.id in FUNCTIONS):
                raise ExpressionError(f"only sin and cos may be called in {self.text!r}")
            if len(node.args) != 1 or node.keywords:
                raise ExpressionError(f"{node.func.id} takes exactly one argument")
            self._check(node.args[0])
        else:
            raise ExpressionError(f"unsupported syntax {type(node).__name__} in {self.text!r}")

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else CONSTANTS[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        return FUNCTIONS[node.func.id](self._eval(node.args[0], env))

    def __call__(self, x, y, t=0.0):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="raise", invalid="raise"):
            try:
                out = self._eval(self._tree, {"x": x, "y": y, "t": float(t)})
            except FloatingPointError as exc:
                raise ExpressionError(f"{self.text!r}: {exc}") from None
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(x, y).shape)

    @property
    def is_constant(self):
        return not self.variables

    def __repr__(self):
        return f"Expression({self.text!r})"
