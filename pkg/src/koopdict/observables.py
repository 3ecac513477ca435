"""Scalar observables evaluated on state or latent coordinates.

Three built-ins cover the standard experiments, and a small arithmetic
expression language (`+ - * / ^` and `exp`, over variables z1, z2, ...)
lets a config define new observables without code changes.  Expressions
are compiled through the ``ast`` module against an explicit node
whitelist; nothing outside that grammar evaluates.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "Observable",
    "ExpressionError",
    "builtin_observables",
    "get_observable",
    "compile_expression",
]


class ExpressionError(ValueError):
    """Raised for expressions outside the supported grammar."""


@dataclass(frozen=True)
class Observable:
    """A named scalar function of a fixed number of coordinates.

    Calling it with a (..., arity) array returns values over the leading
    axes, so it can be handed straight to ``evaluate_observable``.
    """

    name: str
    arity: int
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states)
        if states.ndim == 0 or states.shape[-1] != self.arity:
            raise ValueError(
                f"observable '{self.name}' takes {self.arity} coordinates, "
                f"got array of shape {states.shape}"
            )
        return self.fn(states)


def _gaussian(states: np.ndarray) -> np.ndarray:
    return 3.0 * np.exp(-np.sum(states**2, axis=-1) / 10.0)


def _sumsq(states: np.ndarray) -> np.ndarray:
    return np.sum(states**2, axis=-1)


def builtin_observables() -> dict[str, Observable]:
    return {
        "gauss3": Observable("gauss3", 2, _gaussian),
        "sumsq": Observable("sumsq", 2, _sumsq),
        "gauss6": Observable("gauss6", 6, _gaussian),
    }


_ALLOWED_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}

_ALLOWED_CALLS = {"exp": np.exp}


def _validate_node(node: ast.AST, seen_vars: set[int]) -> None:
    if isinstance(node, ast.Expression):
        _validate_node(node.body, seen_vars)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _ALLOWED_BINOPS:
            raise ExpressionError(f"operator {type(node.op).__name__} is not supported")
        _validate_node(node.left, seen_vars)
        _validate_node(node.right, seen_vars)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.UAdd, ast.USub)):
            raise ExpressionError(f"operator {type(node.op).__name__} is not supported")
        _validate_node(node.operand, seen_vars)
    elif isinstance(node, ast.Call):
        if (
            not isinstance(node.func, ast.Name)
            or node.func.id not in _ALLOWED_CALLS
            or node.keywords
            or len(node.args) != 1
        ):
            raise ExpressionError("only exp(<expr>) calls are supported")
        _validate_node(node.args[0], seen_vars)
    elif isinstance(node, ast.Name):
        ident = node.id
        if not (len(ident) > 1 and ident[0] == "z" and ident[1:].isdigit()):
            raise ExpressionError(f"unknown name '{ident}'; variables are z1, z2, ...")
        index = int(ident[1:])
        if index < 1:
            raise ExpressionError(f"variable '{ident}' is out of range; indices start at z1")
        seen_vars.add(index)
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise ExpressionError(f"literal {node.value!r} is not numeric")
    else:
        raise ExpressionError(f"syntax element {type(node).__name__} is not supported")


def _evaluate_node(node: ast.AST, states: np.ndarray):
    if isinstance(node, ast.Expression):
        return _evaluate_node(node.body, states)
    if isinstance(node, ast.BinOp):
        op = _ALLOWED_BINOPS[type(node.op)]
        return op(_evaluate_node(node.left, states), _evaluate_node(node.right, states))
    if isinstance(node, ast.UnaryOp):
        value = _evaluate_node(node.operand, states)
        return -value if isinstance(node.op, ast.USub) else +value
    if isinstance(node, ast.Call):
        return _ALLOWED_CALLS[node.func.id](_evaluate_node(node.args[0], states))
    if isinstance(node, ast.Name):
        return states[..., int(node.id[1:]) - 1]
    if isinstance(node, ast.Constant):
        return float(node.value)
    raise ExpressionError(f"syntax element {type(node).__name__} is not supported")


def compile_expression(expression: str, arity: int | None = None) -> Observable:
    """Compile an arithmetic expression into an :class:`Observable`.

    ``^`` means power.  Variables are z1..zk; the arity defaults to the
    highest index used, and an explicit ``arity`` may widen (never
    narrow) it.
    """
    source = expression.replace("^", "**")
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"could not parse expression {expression!r}: {exc.msg}") from None
    seen: set[int] = set()
    _validate_node(tree, seen)
    inferred = max(seen) if seen else 0
    if arity is None:
        arity = inferred
    elif arity < inferred:
        raise ExpressionError(
            f"expression uses z{inferred} but declared arity is {arity}"
        )
    if arity < 1:
        raise ExpressionError("expression must reference at least one variable")

    def fn(states: np.ndarray) -> np.ndarray:
        out = _evaluate_node(tree, states)
        # a constant-only branch can collapse; broadcast back over rows
        return np.broadcast_to(out, states.shape[:-1]).astype(float, copy=True)

    return Observable(f"expr:{expression}", arity, fn)


def get_observable(spec: str, arity: int | None = None) -> Observable:
    """Look up a built-in by id, or compile anything else as an expression."""
    library = builtin_observables()
    if spec in library:
        return library[spec]
    return compile_expression(spec, arity)
