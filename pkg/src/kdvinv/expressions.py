"""A tiny arithmetic expression grammar for scenario data.

Supports numbers, the variables t and x, the constants pi and e, the
functions sin/cos/exp, and +, -, *, /, ** with unary minus.  Expressions are
parsed once via the ast module with a strict whitelist and evaluated with
numpy, so configs stay self-contained and oracle-checkable.
"""

from __future__ import annotations

import ast
from typing import Callable

import numpy as np

from .errors import ConfigError

_FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_CONSTANTS = {"pi": np.pi, "e": np.e}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


def compile_expression(text: str, variables: tuple[str, ...]) -> Callable:
    """Compile ``text`` into a function of the named variables."""
    if not isinstance(text, str):
        raise ConfigError(f"expected an expression string, got {text!r}")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc}") from None

    def check(node):
        if isinstance(node, ast.Expression):
            check(node.body)
        elif isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            check(node.left)
            check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            check(node.operand)
        elif isinstance(node, ast.Call):
            if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCTIONS):
                raise ConfigError(f"unsupported function in expression {text!r}")
            if len(node.args) != 1 or node.keywords:
                raise ConfigError(f"functions take one argument in {text!r}")
            check(node.args[0])
        elif isinstance(node, ast.Name):
            if node.id not in variables and node.id not in _CONSTANTS:
                raise ConfigError(
                    f"unknown name {node.id!r} in expression {text!r}; "
                    f"allowed variables: {variables}"
                )
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)):
                raise ConfigError(f"non-numeric constant in expression {text!r}")
        else:
            raise ConfigError(f"unsupported syntax in expression {text!r}")

    check(tree)

    def evaluate(node, env):
        if isinstance(node, ast.Expression):
            return evaluate(node.body, env)
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](
                evaluate(node.left, env), evaluate(node.right, env)
            )
        if isinstance(node, ast.UnaryOp):
            val = evaluate(node.operand, env)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.Call):
            return _FUNCTIONS[node.func.id](evaluate(node.args[0], env))
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else _CONSTANTS[node.id]
        if isinstance(node, ast.Constant):
            return float(node.value)
        raise AssertionError("unreachable: whitelist already enforced")

    def fn(**kwargs):
        missing = [v for v in variables if v not in kwargs]
        if missing:
            raise ConfigError(f"expression {text!r} missing variables {missing}")
        return evaluate(tree, kwargs)

    fn.source = text
    return fn
