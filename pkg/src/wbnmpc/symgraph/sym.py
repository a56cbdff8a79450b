"""Operator-overloading front end for building expressions.

``Sym`` is a thin handle ``(graph, node id)``; arithmetic on handles appends
hash-consed nodes.  The free functions accept either handles or plain floats,
so model equations can be written once and evaluated numerically or traced.
"""
from __future__ import annotations

import math
from numbers import Real

from .graph import ExprGraph, Op


class Sym:
    __slots__ = ("g", "id")

    def __init__(self, g: ExprGraph, nid: int):
        self.g = g
        self.id = nid

    def __repr__(self) -> str:
        return f"Sym({self.g.op(self.id).name}#{self.id})"

    def _lift(self, other) -> int:
        if isinstance(other, Sym):
            if other.g is not self.g:
                raise ValueError("operands belong to different graphs")
            return other.id
        if isinstance(other, Real):
            return self.g.const(float(other))
        return NotImplemented

    def _bin(self, op: Op, other, reverse: bool = False):
        o = self._lift(other)
        if o is NotImplemented:
            return NotImplemented
        a, b = (o, self.id) if reverse else (self.id, o)
        return Sym(self.g, self.g.node(op, a, b))

    def __add__(self, o):
        return self._bin(Op.ADD, o)

    def __radd__(self, o):
        return self._bin(Op.ADD, o, True)

    def __sub__(self, o):
        return self._bin(Op.SUB, o)

    def __rsub__(self, o):
        return self._bin(Op.SUB, o, True)

    def __mul__(self, o):
        return self._bin(Op.MUL, o)

    def __rmul__(self, o):
        return self._bin(Op.MUL, o, True)

    def __truediv__(self, o):
        return self._bin(Op.DIV, o)

    def __rtruediv__(self, o):
        return self._bin(Op.DIV, o, True)

    def __neg__(self):
        return Sym(self.g, self.g.neg(self.id))

    def __pos__(self):
        return self

    def __pow__(self, p):
        if not isinstance(p, Real):
            raise TypeError("only constant real exponents are supported")
        return Sym(self.g, self.g.node(Op.POW, self.id, exponent=float(p)))


def _unary(op: Op, fn):
    def f(x):
        if isinstance(x, Sym):
            return Sym(x.g, x.g.node(op, x.id))
        return fn(x)

    f.__name__ = op.name.lower()
    return f


sin = _unary(Op.SIN, math.sin)
cos = _unary(Op.COS, math.cos)
tan = _unary(Op.TAN, math.tan)
atan = _unary(Op.ATAN, math.atan)
tanh = _unary(Op.TANH, math.tanh)
exp = _unary(Op.EXP, math.exp)
sqrt = _unary(Op.SQRT, math.sqrt)


def _binary(op: Op, fn):
    def f(x, y):
        if isinstance(x, Sym):
            return x._bin(op, y)
        if isinstance(y, Sym):
            return y._bin(op, x, reverse=True)
        return fn(x, y)

    f.__name__ = op.name.lower()
    return f


atan2 = _binary(Op.ATAN2, math.atan2)
fmin = _binary(Op.MIN, lambda a, b: a if a <= b else b)
fmax = _binary(Op.MAX, lambda a, b: a if a >= b else b)


def variables(g: ExprGraph, n: int | None = None, start: int = 0) -> list[Sym]:
    n = g.n_vars - start if n is None else n
    return [Sym(g, g.var(start + i)) for i in range(n)]


def parameters(g: ExprGraph, n: int | None = None, start: int = 0) -> list[Sym]:
    n = g.n_params - start if n is None else n
    return [Sym(g, g.param(start + i)) for i in range(n)]


def constant(g: ExprGraph, v: float) -> Sym:
    return Sym(g, g.const(v))


def node_id(g: ExprGraph, x) -> int:
    """Node id for a handle or a plain number (lifted to a constant)."""
    if isinstance(x, Sym):
        return x.id
    return g.const(float(x))
