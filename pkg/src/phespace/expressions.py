"""Tiny expression language for user-supplied scalar functions.

Grammar: real literals, named symbols, ``+ - * / ^``, unary minus, ``exp``,
``ln``, ``sqrt`` and parentheses.  ``^`` is right-associative and binds
tighter than unary minus, matching mathematical convention.  Parsing builds
an AST once; evaluation runs on any mix of floats and jets, so the same
expression serves plain sampling and jet-valued field construction.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import ParseError, SingularPoint
from .jets import Jet, jexp, jln, jsqrt

__all__ = ["parse_expression", "Expression"]

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)

_FUNCS = {"exp", "ln", "sqrt"}


@dataclass
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            raise ParseError(f"unexpected character {stripped[0]!r}", pos + len(text[pos:]) - len(stripped))
        if m.lastgroup is None:
            pos = m.end()
            continue
        start = m.start(m.lastgroup)
        if m.group("num") is not None:
            tokens.append(_Token("num", m.group(0).strip(), start))
        elif m.group("name") is not None:
            tokens.append(_Token("name", m.group("name"), start))
        else:
            tokens.append(_Token("op", m.group("op"), start))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def pop(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        tok = self.pop()
        if tok.kind != "op" or tok.text != op:
            raise ParseError(f"expected {op!r}", tok.pos)

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"trailing input {tok.text!r}", tok.pos)
        return node

    def expr(self):
        node = self.term()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in "+-":
                self.pop()
                rhs = self.term()
                node = ("add" if tok.text == "+" else "sub", node, rhs)
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in "*/":
                self.pop()
                rhs = self.unary()
                node = ("mul" if tok.text == "*" else "div", node, rhs)
            else:
                return node

    def unary(self):
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.pop()
            return ("neg", self.unary())
        if tok.kind == "op" and tok.text == "+":
            self.pop()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.pop()
            # right-associative; exponent may carry its own unary minus
            return ("pow", base, self.unary())
        return base

    def atom(self):
        tok = self.pop()
        if tok.kind == "num":
            return ("const", float(tok.text))
        if tok.kind == "name":
            if tok.text in _FUNCS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return (tok.text, arg)
            return ("sym", tok.text)
        if tok.kind == "op" and tok.text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ParseError(f"unexpected token {tok.text!r}" if tok.text else "unexpected end of input", tok.pos)


def _sym_names(node, out):
    kind = node[0]
    if kind == "sym":
        out.add(node[1])
    elif kind == "const":
        pass
    else:
        for child in node[1:]:
            _sym_names(child, out)


def _pow(base, exponent):
    if isinstance(exponent, Jet):
        raise ParseError("exponent must be constant", 0)
    if isinstance(base, Jet):
        return base ** exponent
    if base < 0 and exponent != round(exponent):
        raise SingularPoint(f"fractional power of negative base {base!r}")
    return float(base) ** float(exponent)


def _eval(node, env):
    kind = node[0]
    if kind == "const":
        return node[1]
    if kind == "sym":
        return env[node[1]]
    if kind == "neg":
        return -_eval(node[1], env)
    if kind in ("add", "sub", "mul", "div"):
        a = _eval(node[1], env)
        b = _eval(node[2], env)
        if kind == "add":
            return a + b
        if kind == "sub":
            return a - b
        if kind == "mul":
            return a * b
        if isinstance(a, Jet) or isinstance(b, Jet):
            return a / b
        if b == 0.0:
            raise SingularPoint("division by zero")
        return a / b
    if kind == "pow":
        return _pow(_eval(node[1], env), _eval(node[2], env))
    arg = _eval(node[1], env)
    if isinstance(arg, Jet):
        return {"exp": jexp, "ln": jln, "sqrt": jsqrt}[kind](arg)
    if kind == "exp":
        return math.exp(arg)
    if arg <= 0.0:
        raise SingularPoint(f"{kind} of non-positive value {arg!r}")
    return math.log(arg) if kind == "ln" else math.sqrt(arg)


class Expression:
    """Parsed scalar expression, callable on floats or jets."""

    def __init__(self, text, ast):
        self.text = text
        self.ast = ast
        names = set()
        _sym_names(ast, names)
        self.symbols = frozenset(names)

    def __call__(self, **env):
        missing = self.symbols - env.keys()
        if missing:
            raise KeyError(f"unbound symbols {sorted(missing)} in {self.text!r}")
        return _eval(self.ast, env)

    def bind(self, **constants):
        """Return a callable with some symbols pre-bound (parameter values)."""
        def bound(**env):
            merged = dict(constants)
            merged.update(env)
            return self(**merged)

        bound.symbols = self.symbols - constants.keys()
        return bound

    def __repr__(self):
        return f"Expression({self.text!r})"


def parse_expression(text):
    return Expression(text, _Parser(text).parse())
