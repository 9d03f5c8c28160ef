"""Small arithmetic expression language for scenario files.

Supports literals, + - * /, powers, unary minus, the functions sin, cos,
exp, sqrt, abs, the constant pi, and variables bound to chart coordinates.
"""

from __future__ import annotations

import ast
import math

import numpy as np

from .errors import ParseError

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs,
          "tan": np.tan, "log": np.log}
_CONSTS = {"pi": math.pi, "e": math.e}

_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name, ast.Call,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Load,
)


def _validate(tree: ast.AST, variables: set[str], text: str):
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ParseError(f"unsupported syntax {type(node).__name__!r} in {text!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ParseError(f"non-numeric literal {node.value!r} in {text!r}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.keywords:
                raise ParseError(f"unsupported call in {text!r}")
            if node.func.id not in _FUNCS:
                raise ParseError(f"unknown function {node.func.id!r} in {text!r}")
        elif isinstance(node, ast.Name):
            if node.id not in variables and node.id not in _CONSTS and node.id not in _FUNCS:
                raise ParseError(f"unknown name {node.id!r} in {text!r}")


def compile_expr(text: str, variables):
    """Compile one expression to a callable taking a coordinate vector."""
    variables = list(variables)
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ParseError(f"cannot parse {text!r}: {exc.msg}") from exc
    _validate(tree, set(variables), text)
    env = dict(_FUNCS)
    env.update(_CONSTS)
    env["__builtins__"] = {}
    args = ", ".join(variables) if variables else "_"
    fn = eval(compile(ast.parse(f"lambda {args}: ({text})", mode="eval"),
                      "<expr>", "eval"), env)

    def call(coords):
        return float(fn(*coords)) if variables else float(fn(0.0))

    return call


def compile_vector(texts, variables):
    """Compile a list of expressions into coords -> ndarray."""
    fns = [compile_expr(t, variables) for t in texts]

    def call(coords):
        return np.array([f(coords) for f in fns])

    return call
