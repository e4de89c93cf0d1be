"""Minimal arithmetic expression grammar for utilities and outcome means.

Supported: numeric literals, indexed variables ``z[i]`` / ``v[i]``, the binary
operators ``+ - * /``, unary minus, ``log`` and ``exp``, and parentheses.
Expressions evaluate vectorized on numpy arrays and serialize back to a
canonical source string, so configs round-trip exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Expression", "ExpressionError", "parse_expression", "affine_in"]

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/()\[\]]))"
)

_FUNCTIONS = {"log": np.log, "exp": np.exp}
_VARIABLES = ("z", "v")


class ExpressionError(ValueError):
    """Raised for malformed expression source or bad variable references."""


@dataclass(frozen=True)
class Expression:
    """A parsed expression; callable on keyword arrays (``z=``, ``v=``)."""

    source: str
    _ast: tuple = field(compare=False, repr=False)

    def __call__(self, **env):
        return _eval(self._ast, env)

    def variables(self):
        """Set of (name, index) pairs referenced by the expression."""
        refs = set()
        _collect(self._ast, refs)
        return refs


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise ExpressionError(f"bad token at {text[pos:]!r}")
        pos = m.end()
        if m.group("num") is not None:
            tokens.append(("num", float(m.group("num"))))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name")))
        else:
            tokens.append(("op", m.group("op")))
    tokens.append(("end", None))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind=None, value=None):
        tok = self.tokens[self.i]
        if kind is not None and tok[0] != kind:
            raise ExpressionError(f"expected {kind}, got {tok}")
        if value is not None and tok[1] != value:
            raise ExpressionError(f"expected {value!r}, got {tok}")
        self.i += 1
        return tok

    def expr(self):
        node = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            op = self.take()[1]
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            op = self.take()[1]
            node = (op, node, self.factor())
        return node

    def factor(self):
        if self.peek() == ("op", "-"):
            self.take()
            return ("neg", self.factor())
        if self.peek() == ("op", "+"):
            self.take()
            return self.factor()
        return self.atom()

    def atom(self):
        kind, value = self.peek()
        if kind == "num":
            self.take()
            return ("const", value)
        if kind == "name":
            self.take()
            if value in _FUNCTIONS:
                self.take("op", "(")
                node = self.expr()
                self.take("op", ")")
                return ("call", value, node)
            if value in _VARIABLES:
                self.take("op", "[")
                idx = self.take("num")[1]
                if idx != int(idx):
                    raise ExpressionError(f"non-integer index in {value}[{idx}]")
                self.take("op", "]")
                return ("var", value, int(idx))
            raise ExpressionError(f"unknown name {value!r}")
        if (kind, value) == ("op", "("):
            self.take()
            node = self.expr()
            self.take("op", ")")
            return node
        raise ExpressionError(f"unexpected token {self.tokens[self.i]}")


def parse_expression(text):
    """Parse ``text`` into an :class:`Expression`.

    Raises :class:`ExpressionError` on malformed input.
    """
    parser = _Parser(_tokenize(str(text)))
    ast = parser.expr()
    parser.take("end")
    return Expression(source=str(text), _ast=ast)


def _eval(node, env):
    op = node[0]
    if op == "const":
        return node[1]
    if op == "var":
        name, idx = node[1], node[2]
        arr = env.get(name)
        if arr is None:
            raise ExpressionError(f"expression references {name}[{idx}] but no {name} given")
        arr = np.asarray(arr)
        if idx >= arr.shape[-1]:
            raise ExpressionError(f"{name}[{idx}] out of range for dimension {arr.shape[-1]}")
        return arr[..., idx]
    if op == "neg":
        return -_eval(node[1], env)
    if op == "call":
        return _FUNCTIONS[node[1]](_eval(node[2], env))
    a = _eval(node[1], env)
    b = _eval(node[2], env)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    raise ExpressionError(f"bad AST node {node!r}")


def _collect(node, refs):
    op = node[0]
    if op == "var":
        refs.add((node[1], node[2]))
    elif op == "neg":
        _collect(node[1], refs)
    elif op == "call":
        _collect(node[2], refs)
    elif op in "+-*/":
        _collect(node[1], refs)
        _collect(node[2], refs)


def affine_in(expr, name, indices):
    """Return ``(intercept, {index: coefficient})`` if ``expr`` is affine in
    ``name[...]``, else ``None``.

    Used to route linear outcome means to closed-form conditional moments.
    """
    try:
        coeffs = _affine(expr._ast, name)
    except _NotAffine:
        return None
    const = coeffs.pop(None, 0.0)
    if any(idx not in indices for idx in coeffs):
        return None
    return const, coeffs


class _NotAffine(Exception):
    pass


def _affine(node, name):
    """Coefficient map {index: coef, None: const} or raise _NotAffine."""
    op = node[0]
    if op == "const":
        return {None: node[1]}
    if op == "var":
        if node[1] != name:
            raise _NotAffine
        return {node[2]: 1.0}
    if op == "neg":
        return {k: -c for k, c in _affine(node[1], name).items()}
    if op in ("+", "-"):
        a = _affine(node[1], name)
        b = _affine(node[2], name)
        sign = 1.0 if op == "+" else -1.0
        for k, c in b.items():
            a[k] = a.get(k, 0.0) + sign * c
        return a
    if op == "*":
        a = _affine(node[1], name)
        b = _affine(node[2], name)
        if set(a) == {None}:
            return {k: a[None] * c for k, c in b.items()}
        if set(b) == {None}:
            return {k: b[None] * c for k, c in a.items()}
        raise _NotAffine
    if op == "/":
        a = _affine(node[1], name)
        b = _affine(node[2], name)
        if set(b) == {None} and b[None] != 0:
            return {k: c / b[None] for k, c in a.items()}
        raise _NotAffine
    raise _NotAffine
