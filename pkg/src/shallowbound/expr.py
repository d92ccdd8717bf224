"""Coefficient expressions: a small recursive-descent parser and evaluator.

Grammar (``^`` binds tightest and is right associative, unary minus sits
between ``^`` and ``* /``)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?
    primary := NUMBER ['i'] | 'i' | 'pi' | 'x' | NAME '(' args ')' | '(' expr ')'

Functions: ``sin``, ``cos``, ``exp``, ``bump(c, w)`` (the C-infinity bump
``exp(1 - 1/(1 - s^2))`` with ``s = (x - c)/w``, scaled to unit integral
and supported on ``[c - w, c + w]``) and its x-derivative ``dbump(c, w)``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import ParseError

__all__ = ["Expr", "Num", "Var", "Neg", "BinOp", "Call", "parse_expr",
           "bump", "dbump", "support", "is_constant"]


def _bump_raw(s):
    return math.exp(1.0 - 1.0 / (1.0 - s * s)) if abs(s) < 1 else 0.0


_BUMP_MASS = quad(_bump_raw, -1.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)[0]


def bump(x, c=0.0, w=1.0):
    """Unit-mass smooth bump centred at ``c`` with half-width ``w``."""
    s = (np.asarray(x, dtype=float) - c) / w
    out = np.zeros(s.shape)
    inside = np.abs(s) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out / (abs(w) * _BUMP_MASS)


def dbump(x, c=0.0, w=1.0):
    """x-derivative of :func:`bump`."""
    s = (np.asarray(x, dtype=float) - c) / w
    out = np.zeros(s.shape)
    inside = np.abs(s) < 1
    si = s[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - si**2)) * (-2 * si / (1.0 - si**2) ** 2)
    return out / (w * abs(w) * _BUMP_MASS)


class Expr:
    """Base class of AST nodes.  Nodes are callables ``x -> complex array``."""

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        val = self.evaluate(x)
        return np.broadcast_to(np.asarray(val, dtype=complex), x.shape).copy()

    def evaluate(self, x):  # pragma: no cover
        raise NotImplementedError

    def __str__(self):
        return self.to_text()


@dataclass(frozen=True)
class Num(Expr):
    value: complex

    def evaluate(self, x):
        return complex(self.value)

    def to_text(self):
        v = complex(self.value)
        if v.imag == 0:
            return repr(v.real)
        if v.real == 0:
            return repr(v.imag) + "i"
        return f"({v.real!r} + {v.imag!r}i)"


@dataclass(frozen=True)
class Var(Expr):
    def evaluate(self, x):
        return x.astype(complex)

    def to_text(self):
        return "x"


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr

    def evaluate(self, x):
        return -self.operand.evaluate(x)

    def to_text(self):
        return f"(-{self.operand.to_text()})"


_BINARY = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
    "^": lambda a, b: np.power(np.asarray(a, dtype=complex), b),
}


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def evaluate(self, x):
        return _BINARY[self.op](self.left.evaluate(x), self.right.evaluate(x))

    def to_text(self):
        return f"({self.left.to_text()} {self.op} {self.right.to_text()})"


_FUNCS = {"sin": 1, "cos": 1, "exp": 1, "bump": 2, "dbump": 2}


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: tuple

    def evaluate(self, x):
        vals = [a.evaluate(x) for a in self.args]
        if self.name in ("bump", "dbump"):
            c, w = vals
            if np.ndim(c) or np.ndim(w) or complex(c).imag or complex(w).imag:
                raise ValueError(f"{self.name}(c, w) needs real constant arguments")
            fn = bump if self.name == "bump" else dbump
            return fn(x, complex(c).real, complex(w).real).astype(complex)
        fn = {"sin": np.sin, "cos": np.cos, "exp": np.exp}[self.name]
        return fn(np.asarray(vals[0], dtype=complex))

    def to_text(self):
        return f"{self.name}({', '.join(a.to_text() for a in self.args)})"


# -- parser ----------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?(?P<imag>i(?![A-Za-z0-9_]))?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)


def _tokenize(text):
    pos, out = 0, []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            kind = "num" if m.group("num") else m.lastgroup
            out.append((kind, m.group(0), pos))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value):
        kind, text, pos = self.tok
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, found {found}", pos)
        return self.take()

    def parse(self):
        node = self.expr()
        kind, text, pos = self.tok
        if kind != "end":
            raise ParseError(f"unexpected {text!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.tok[1] in ("+", "-") and self.tok[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok[1] in ("*", "/") and self.tok[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.tok[0] == "op" and self.tok[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.primary()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def primary(self):
        kind, text, pos = self.take()
        if kind == "num":
            if text.endswith("i"):
                return Num(complex(0.0, float(text[:-1])))
            return Num(complex(float(text)))
        if kind == "name":
            if text == "x":
                return Var()
            if text == "i":
                return Num(1j)
            if text == "pi":
                return Num(complex(math.pi))
            if text in _FUNCS:
                self.expect("(")
                args = [self.expr()]
                while self.tok[0] == "op" and self.tok[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != _FUNCS[text]:
                    raise ParseError(
                        f"{text} takes {_FUNCS[text]} argument(s), got {len(args)}", pos)
                if text in ("bump", "dbump") and not all(is_constant(a) for a in args):
                    raise ParseError(f"{text}(c, w) needs constant arguments", pos)
                return Call(text, tuple(args))
            raise ParseError(f"unknown identifier {text!r}", pos)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"unexpected {found}", pos)


def parse_expr(text: str) -> Expr:
    """Parse ``text`` into an :class:`Expr`.

    Raises :class:`~shallowbound.errors.ParseError` with the character
    offset of the offending token.
    """
    return _Parser(text).parse()


# -- static analysis -------------------------------------------------------------------

_EMPTY = (math.inf, -math.inf)


def is_constant(e: Expr) -> bool:
    if isinstance(e, Var):
        return False
    if isinstance(e, Num):
        return True
    if isinstance(e, Neg):
        return is_constant(e.operand)
    if isinstance(e, BinOp):
        return is_constant(e.left) and is_constant(e.right)
    if isinstance(e, Call):
        return all(is_constant(a) for a in e.args)
    raise TypeError(type(e))


def support(e: Expr):
    """Conservative bound ``(lo, hi)`` on where ``e`` can be nonzero.

    ``None`` means unbounded (or not provable).  Constant zero gives an
    empty interval ``(inf, -inf)``.
    """
    if isinstance(e, Num):
        return _EMPTY if e.value == 0 else None
    if isinstance(e, Var):
        return None
    if isinstance(e, Neg):
        return support(e.operand)
    if isinstance(e, Call):
        if e.name in ("bump", "dbump"):
            if not all(is_constant(a) for a in e.args):
                return None
            c = complex(e.args[0].evaluate(np.zeros(()))).real
            w = abs(complex(e.args[1].evaluate(np.zeros(()))).real)
            return (c - w, c + w)
        if e.name == "sin":
            return support(e.args[0])
        return None
    if isinstance(e, BinOp):
        left, right = support(e.left), support(e.right)
        if e.op == "*":
            if left is None:
                return right
            if right is None:
                return left
            return (max(left[0], right[0]), min(left[1], right[1]))
        if e.op == "/":
            return left
        if e.op in "+-":
            if left is None or right is None:
                return None
            return (min(left[0], right[0]), max(left[1], right[1]))
        if e.op == "^":
            if left is None or not is_constant(e.right):
                return None
            p = complex(e.right.evaluate(np.zeros(())))
            return left if p.real > 0 else None
    raise TypeError(type(e))
