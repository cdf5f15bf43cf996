"""Arithmetic expression language for derived metrics.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := number | identifier | '(' expr ')' | func '(' expr (',' expr)* ')'

Functions: min, max, pow (2 args), exp, log (1 arg), clamp (3 args).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

from .errors import SaseError

FUNCTIONS = {"min": 2, "max": 2, "pow": 2, "exp": 1, "log": 1, "clamp": 3}

_TOKEN = re.compile(
    r"\s*(?:(?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[a-z][a-z0-9_]*)"
    r"|(?P<op>[-+*/(),]))"
)


class ExpressionError(SaseError):
    def __init__(self, message, pos=None, node=None):
        self.pos = pos
        self.node = node
        where = f" at position {pos}" if pos is not None else ""
        if node is not None:
            where += f" in {pretty(node)}"
        super().__init__(message + where)


class ExpressionSyntaxError(ExpressionError, ValueError):
    pass


class EvaluationError(ExpressionError, ArithmeticError):
    pass


class DivisionByZero(EvaluationError):
    pass


class DomainError(EvaluationError):
    pass


class UnboundName(EvaluationError):
    pass


@dataclass(frozen=True)
class Num:
    value: float
    pos: int = 0

    def evaluate(self, env):
        return self.value


@dataclass(frozen=True)
class Ref:
    name: str
    pos: int = 0

    def evaluate(self, env):
        try:
            return float(env[self.name])
        except KeyError:
            raise UnboundName(f"unbound identifier {self.name}", self.pos, self) from None


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"
    pos: int = 0

    def evaluate(self, env):
        a = self.left.evaluate(env)
        b = self.right.evaluate(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if b == 0:
            raise DivisionByZero("division by zero", self.pos, self)
        return a / b


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple
    pos: int = 0

    def evaluate(self, env):
        xs = [a.evaluate(env) for a in self.args]
        f = self.func
        if f == "min":
            return min(xs[0], xs[1])
        if f == "max":
            return max(xs[0], xs[1])
        if f == "clamp":
            return min(max(xs[0], xs[1]), xs[2])
        if f == "log":
            if xs[0] <= 0:
                raise DomainError("log of non-positive value", self.pos, self)
            return math.log(xs[0])
        try:
            return math.exp(xs[0]) if f == "exp" else math.pow(xs[0], xs[1])
        except OverflowError:
            raise EvaluationError(f"{f} overflowed", self.pos, self) from None
        except ValueError:
            raise DomainError(f"{f} undefined for these arguments", self.pos, self) from None


Node = Union[Num, Ref, BinOp, Call]


def _tokenize(text: str):
    tokens, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            bad = len(text) - len(text[pos:].lstrip())
            raise ExpressionSyntaxError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value or kind != "op":
            found = "end of input" if kind == "end" else repr(text)
            raise ExpressionSyntaxError(f"expected {value!r}, found {found}", pos)

    def expr(self):
        node = self.term()
        while self.peek[1] in ("+", "-") and self.peek[0] == "op":
            _, op, pos = self.take()
            node = BinOp(op, node, self.term(), pos)
        return node

    def term(self):
        node = self.factor()
        while self.peek[1] in ("*", "/") and self.peek[0] == "op":
            _, op, pos = self.take()
            node = BinOp(op, node, self.factor(), pos)
        return node

    def factor(self):
        kind, text, pos = self.take()
        if kind == "number":
            value = float(text)
            if not math.isfinite(value):
                raise ExpressionSyntaxError(f"number literal {text} is not finite", pos)
            return Num(value, pos)
        if kind == "name":
            if self.peek[1] == "(" and self.peek[0] == "op":
                return self.call(text, pos)
            if text in FUNCTIONS:
                raise ExpressionSyntaxError(f"function {text} used without arguments", pos)
            return Ref(text, pos)
        if text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ExpressionSyntaxError(f"unexpected {found}", pos)

    def call(self, name, pos):
        if name not in FUNCTIONS:
            raise ExpressionSyntaxError(f"unknown function {name}", pos)
        self.expect("(")
        args = []
        if not (self.peek[0] == "op" and self.peek[1] == ")"):
            args.append(self.expr())
            while self.peek[1] == "," and self.peek[0] == "op":
                self.take()
                args.append(self.expr())
        self.expect(")")
        if len(args) != FUNCTIONS[name]:
            raise ExpressionSyntaxError(
                f"{name} takes {FUNCTIONS[name]} argument(s), got {len(args)}", pos)
        return Call(name, tuple(args), pos)


def parse_expression(text: str) -> Node:
    parser = _Parser(text)
    node = parser.expr()
    kind, tok, pos = parser.peek
    if kind != "end":
        raise ExpressionSyntaxError(f"unexpected {tok!r} after expression", pos)
    return node


def eval_expression(node: Node, env: Mapping) -> float:
    return node.evaluate(env)


def pretty(node: Node) -> str:
    """Render ``node`` as fully parenthesized source that parses back to it."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Ref):
        return node.name
    if isinstance(node, BinOp):
        return f"({pretty(node.left)} {node.op} {pretty(node.right)})"
    return f"{node.func}({', '.join(pretty(a) for a in node.args)})"


def references(node: Node) -> list[str]:
    """Identifiers referenced by ``node``, in first-occurrence order."""
    seen = []

    def walk(n):
        if isinstance(n, Ref):
            if n.name not in seen:
                seen.append(n.name)
        elif isinstance(n, BinOp):
            walk(n.left)
            walk(n.right)
        elif isinstance(n, Call):
            for a in n.args:
                walk(a)

    walk(node)
    return seen
