"""A small arithmetic grammar for user-defined densities.

Supported syntax: numbers, the variable ``x``, the constant ``pi``, the
functions ``exp`` and ``log``, the operators ``+ - * / ^`` (with ``^``
right-associative exponentiation), unary minus, and parentheses.  Parsed
expressions evaluate vectorized on numpy arrays.
"""

from __future__ import annotations

import re
from typing import Callable

import numpy as np

__all__ = ["ExpressionError", "parse_expression"]

_TOKEN_RE = re.compile(r"""
    (?P<num>\d+\.\d*|\.\d+|\d+(?:[eE][+-]?\d+)?|\d+\.\d*[eE][+-]?\d+|\.\d+[eE][+-]?\d+)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
  | (?P<ws>\s+)
""", re.VERBOSE)

_FUNCTIONS = {"exp": np.exp, "log": np.log}
_CONSTANTS = {"pi": np.pi}


class ExpressionError(ValueError):
    pass


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExpressionError(f"unexpected character {text[pos]!r} at position {pos}")
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group()))
        pos = m.end()
    tokens.append(("end", ""))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text = self.next()
        if text != value:
            raise ExpressionError(f"expected {value!r}, found {text!r}")

    def parse(self):
        node = self.expr()
        kind, text = self.peek()
        if kind != "end":
            raise ExpressionError(f"trailing input starting at {text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.next()[1]
            rhs = self.term()
            node = (_add if op == "+" else _sub)(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.next()[1]
            rhs = self.unary()
            node = (_mul if op == "*" else _div)(node, rhs)
        return node

    def unary(self):
        if self.peek()[1] == "-":
            self.next()
            return _neg(self.unary())
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek()[1] == "^":
            self.next()
            return _pow(base, self.unary())
        return base

    def primary(self):
        kind, text = self.next()
        if kind == "num":
            value = float(text)
            return lambda x: value
        if kind == "name":
            if text in _FUNCTIONS:
                fn = _FUNCTIONS[text]
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return lambda x, _fn=fn, _arg=arg: _fn(_arg(x))
            if text in _CONSTANTS:
                value = _CONSTANTS[text]
                return lambda x: value
            if text == "x":
                return lambda x: x
            raise ExpressionError(f"unknown name {text!r}")
        if text == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExpressionError(f"unexpected token {text!r}")


def _add(a, b):
    return lambda x: a(x) + b(x)


def _sub(a, b):
    return lambda x: a(x) - b(x)


def _mul(a, b):
    return lambda x: a(x) * b(x)


def _div(a, b):
    return lambda x: a(x) / b(x)


def _neg(a):
    return lambda x: -a(x)


def _pow(a, b):
    return lambda x: a(x) ** b(x)


def parse_expression(text: str) -> Callable[[np.ndarray], np.ndarray]:
    """Compile an expression in the density grammar to a vectorized callable."""
    if not text or not text.strip():
        raise ExpressionError("empty expression")
    node = _Parser(_tokenize(text)).parse()

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        out = node(x)
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape).copy()

    return evaluate
