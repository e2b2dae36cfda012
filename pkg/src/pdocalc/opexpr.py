"""Operator expressions over named atoms.

Grammar::

    expr  := term (("+" | "-") term)*
    term  := unary ("*" unary)*
    unary := "-" unary | power
    power := atom ("^" exponent)?
    exponent := ["-"] number | "(" ["-"] number ["/" number] ")"
    atom  := number | name | "(" expr ")" | "[" expr "," expr "]"

``*`` is composition.  A number in operator position means that multiple of
the identity.  ``Delta^r`` is passed to the backend as a real power; any other
atom accepts only nonnegative integer exponents.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Callable, Mapping

_TOKEN = re.compile(r"\s*(?:(\d+\.\d*|\.\d+|\d+)|([A-Za-z_][A-Za-z0-9_]*)|(.))")


class ExprError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


def _tokens(text):
    out = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        start = m.start() + (len(m.group(0)) - len(m.group(0).lstrip()))
        num, name, sym = m.groups()
        if num is not None:
            out.append(("num", num, start))
        elif name is not None:
            out.append(("name", name, start))
        elif sym in "+-*^()[],/":
            out.append((sym, sym, start))
        else:
            raise ExprError(f"unexpected character {sym!r}", start)
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text):
        self.toks = _tokens(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None):
        tok = self.toks[self.i]
        if kind is not None and tok[0] != kind:
            raise ExprError(f"expected {kind!r}, found {tok[1] or 'end of input'!r}", tok[2])
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprError(f"unexpected {tok[1]!r}", tok[2])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] in "+-" and self.peek()[0] != "end":
            op = self.take()[0]
            node = ("add" if op == "+" else "sub", node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "*":
            self.take()
            node = ("mul", node, self.unary())
        return node

    def unary(self):
        if self.peek()[0] == "-":
            self.take()
            return ("neg", self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        if self.peek()[0] == "^":
            self.take()
            node = ("pow", node, self.exponent())
        return node

    def _signed_number(self):
        sign = 1
        if self.peek()[0] == "-":
            self.take()
            sign = -1
        return sign * Fraction(self.take("num")[1])

    def exponent(self):
        if self.peek()[0] == "(":
            self.take()
            value = self._signed_number()
            if self.peek()[0] == "/":
                self.take()
                den = Fraction(self.take("num")[1])
                if den == 0:
                    raise ExprError("zero denominator", self.toks[self.i - 1][2])
                value /= den
            self.take(")")
            return value
        return self._signed_number()

    def atom(self):
        tok = self.peek()
        if tok[0] == "num":
            self.take()
            return ("num", float(tok[1]))
        if tok[0] == "name":
            self.take()
            return ("atom", tok[1], tok[2])
        if tok[0] == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        if tok[0] == "[":
            self.take()
            a = self.expr()
            self.take(",")
            b = self.expr()
            self.take("]")
            return ("comm", a, b)
        raise ExprError(f"unexpected {tok[1] or 'end of input'!r}", tok[2])


def parse_expr(text: str):
    """Parse to a nested-tuple syntax tree."""
    if not text or not text.strip():
        raise ExprError("empty expression", 0)
    return _Parser(text).parse()


def evaluate(
    tree,
    atoms: Mapping[str, object],
    identity,
    delta_power: Callable[[float], object] | None = None,
):
    """Evaluate a tree; values must support ``+``, ``-``, ``@`` and scalar ``*``."""

    def ev(node):
        kind = node[0]
        if kind == "num":
            return node[1] * identity
        if kind == "atom":
            name = node[1]
            if name == "Delta" and delta_power is not None:
                return delta_power(1.0)
            if name not in atoms:
                raise ExprError(f"unknown operator {name!r}", node[2])
            return atoms[name]
        if kind == "pow":
            base, r = node[1], node[2]
            if base[0] == "atom" and base[1] == "Delta" and delta_power is not None:
                return delta_power(float(r))
            if r.denominator != 1 or r < 0:
                raise ExprError("only Delta takes non-integer or negative powers", base[2] if base[0] == "atom" else 0)
            out = identity
            value = ev(base)
            for _ in range(int(r)):
                out = out @ value
            return out
        if kind == "neg":
            return -1.0 * ev(node[1])
        if kind == "add":
            return ev(node[1]) + ev(node[2])
        if kind == "sub":
            return ev(node[1]) - ev(node[2])
        if kind == "mul":
            a, b = node[1], node[2]
            if a[0] == "num":
                return a[1] * ev(b)
            if b[0] == "num":
                return b[1] * ev(a)
            return ev(a) @ ev(b)
        if kind == "comm":
            a, b = ev(node[1]), ev(node[2])
            return a @ b - b @ a
        raise AssertionError(kind)

    return ev(tree)


def commutator_depth(tree) -> int:
    """Nesting depth of commutator brackets."""
    if tree[0] == "comm":
        return 1 + max(commutator_depth(tree[1]), commutator_depth(tree[2]))
    return max((commutator_depth(c) for c in tree[1:] if isinstance(c, tuple)), default=0)
