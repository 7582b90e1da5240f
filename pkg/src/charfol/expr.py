"""A small arithmetic expression language compiled to jet-aware callables.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("+" | "-") unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"

``^`` is right associative and binds tighter than unary minus, so ``-x^2``
is ``-(x^2)``.
"""
from __future__ import annotations

import math
import re
from typing import Callable, Mapping, Sequence

from . import jets as J

FUNCTIONS: dict[str, Callable] = {
    "sin": J.sin,
    "cos": J.cos,
    "sinh": J.sinh,
    "cosh": J.cosh,
    "exp": J.exp,
    "ln": J.log,
    "sqrt": J.sqrt,
}
CONSTANTS = {"pi": math.pi, "e": math.e}

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(.))")


class ExpressionError(ValueError):
    pass


def tokenize(text: str) -> list[tuple[str, str]]:
    out = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        num, name, op = m.groups()
        if num is not None:
            out.append(("num", num))
        elif name is not None:
            out.append(("name", name))
        elif op is not None:
            if op not in "+-*/^()":
                raise ExpressionError(f"unexpected character {op!r} at {m.start(3)}")
            out.append(("op", op))
        pos = m.end()
    out.append(("end", ""))
    return out


class _Parser:
    def __init__(self, text: str, variables: Sequence[str], params: Mapping[str, float]):
        self.toks = tokenize(text)
        self.i = 0
        self.vars = {v: k for k, v in enumerate(variables)}
        self.params = dict(params)

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        tok = self.toks[self.i]
        if (kind and tok[0] != kind) or (value is not None and tok[1] != value):
            want = value or kind
            raise ExpressionError(f"expected {want!r} but found {tok[1] or 'end of input'!r}")
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        self.take("end")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            rhs = self.term()
            node = _binary(op, node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            rhs = self.unary()
            node = _binary(op, node, rhs)
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            inner = self.unary()
            return lambda xs: -inner(xs)
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            exponent = self.unary()
            return _binary("^", base, exponent)
        return base

    def atom(self):
        kind, val = self.peek()
        if kind == "num":
            self.take()
            c = float(val)
            return lambda xs: c
        if kind == "name":
            self.take()
            if val in FUNCTIONS:
                fn = FUNCTIONS[val]
                self.take("op", "(")
                arg = self.expr()
                self.take("op", ")")
                return lambda xs: fn(arg(xs))
            if val in self.vars:
                k = self.vars[val]
                return lambda xs: xs[k]
            if val in self.params:
                c = float(self.params[val])
                return lambda xs: c
            if val in CONSTANTS:
                c = CONSTANTS[val]
                return lambda xs: c
            raise ExpressionError(f"unknown name {val!r}")
        if (kind, val) == ("op", "("):
            self.take()
            node = self.expr()
            self.take("op", ")")
            return node
        raise ExpressionError(f"unexpected {val or 'end of input'!r}")


def _binary(op, lhs, rhs):
    if op == "+":
        return lambda xs: lhs(xs) + rhs(xs)
    if op == "-":
        return lambda xs: lhs(xs) - rhs(xs)
    if op == "*":
        return lambda xs: lhs(xs) * rhs(xs)
    if op == "/":
        def div(xs):
            d = rhs(xs)
            if not isinstance(d, J.Jet) and d == 0.0:
                raise J.DomainError("division by zero")
            return lhs(xs) / d
        return div

    def pw(xs):
        base, ex = lhs(xs), rhs(xs)
        if isinstance(base, J.Jet) or isinstance(ex, J.Jet):
            return base ** ex
        if base < 0 and not float(ex).is_integer():
            raise J.DomainError("fractional power of a negative number")
        return base ** ex

    return pw


def compile_expression(text: str, variables: Sequence[str] = ("x", "y", "z"),
                       params: Mapping[str, float] | None = None) -> Callable:
    """Compile ``text`` to a function of a coordinate list (floats or jets)."""
    return _Parser(text, variables, params or {}).parse()
