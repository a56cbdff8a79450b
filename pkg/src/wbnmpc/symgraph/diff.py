"""Symbolic reverse-mode differentiation and structural statistics."""
from __future__ import annotations

import heapq
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import ExprGraph, Op


@dataclass(frozen=True)
class SparseJacobian:
    """Structurally nonzero Jacobian entries as graph node ids.

    ``entries`` holds ``(row, col, node_id)`` triplets sorted by (row, col);
    absent pairs are structurally zero.
    """

    n_rows: int
    n_cols: int
    entries: tuple

    @property
    def nnz(self) -> int:
        return len(self.entries)

    @property
    def density(self) -> float:
        if self.n_rows == 0 or self.n_cols == 0:
            return 0.0
        return len(self.entries) / (self.n_rows * self.n_cols)

    @property
    def node_ids(self) -> list[int]:
        return [e[2] for e in self.entries]

    def pattern(self) -> np.ndarray:
        """Boolean (n_rows, n_cols) sparsity pattern."""
        pat = np.zeros((self.n_rows, self.n_cols), dtype=bool)
        for r, c, _ in self.entries:
            pat[r, c] = True
        return pat

    def to_dense(self, values: np.ndarray) -> np.ndarray:
        """Scatter evaluated entry values (in entry order) into a dense matrix."""
        values = np.asarray(values)
        rows = np.fromiter((e[0] for e in self.entries), dtype=np.int64, count=self.nnz)
        cols = np.fromiter((e[1] for e in self.entries), dtype=np.int64, count=self.nnz)
        out = np.zeros(values.shape[:-1] + (self.n_rows, self.n_cols))
        out[..., rows, cols] = values
        return out


class _Adjoints:
    """Accumulator for one reverse sweep."""

    def __init__(self, g: ExprGraph):
        self.g = g
        self.adj: dict[int, int] = {}
        self.heap: list[int] = []
        self.one = g.const(1.0)

    def scale(self, adj: int, d: int) -> int:
        g = self.g
        if adj == self.one:
            return d
        if d == self.one:
            return adj
        return g.mul(adj, d)

    def add(self, child: int, contrib: int, negate: bool = False) -> None:
        g = self.g
        if not g._dep[child]:
            return
        prev = self.adj.get(child)
        if prev is None:
            self.adj[child] = g.neg(contrib) if negate else contrib
            heapq.heappush(self.heap, -child)
        else:
            self.adj[child] = g.sub(prev, contrib) if negate else g.add(prev, contrib)


def _sweep(g: ExprGraph, out: int) -> dict[int, int]:
    """Reverse sweep from one output; returns adjoint node ids of reached nodes."""
    acc = _Adjoints(g)
    if not g._dep[out]:
        return {}
    acc.adj[out] = acc.one
    acc.heap.append(-out)
    ops, A, B = g._op, g._a, g._b
    done: dict[int, int] = {}
    while acc.heap:
        nid = -heapq.heappop(acc.heap)
        adj = acc.adj.pop(nid)
        done[nid] = adj
        op = ops[nid]
        if op == Op.VAR:
            continue
        a = A[nid]
        b = B[nid]
        if op == Op.ADD:
            acc.add(a, adj)
            acc.add(b, adj)
        elif op == Op.MUL:
            if g._dep[a]:
                acc.add(a, acc.scale(adj, b))
            if g._dep[b]:
                acc.add(b, acc.scale(adj, a))
        elif op == Op.SUB:
            acc.add(a, adj)
            acc.add(b, adj, negate=True)
        elif op == Op.TANH:
            d = g.sub(acc.one, g.mul(nid, nid))
            acc.add(a, acc.scale(adj, d))
        elif op == Op.DIV:
            if g._dep[a]:
                acc.add(a, g.div(adj, b))
            if g._dep[b]:
                acc.add(b, g.div(acc.scale(adj, nid), b), negate=True)
        elif op == Op.NEG:
            acc.add(a, adj, negate=True)
        elif op == Op.SIN:
            acc.add(a, acc.scale(adj, g.node(Op.COS, a)))
        elif op == Op.COS:
            acc.add(a, acc.scale(adj, g.node(Op.SIN, a)), negate=True)
        elif op == Op.TAN:
            d = g.add(acc.one, g.mul(nid, nid))
            acc.add(a, acc.scale(adj, d))
        elif op == Op.ATAN:
            d = g.add(acc.one, g.mul(a, a))
            acc.add(a, g.div(adj, d))
        elif op == Op.ATAN2:
            # atan2(y, x): d/dy = x/r2, d/dx = -y/r2
            r2 = g.add(g.mul(a, a), g.mul(b, b))
            if g._dep[a]:
                acc.add(a, g.div(acc.scale(adj, b), r2))
            if g._dep[b]:
                acc.add(b, g.div(acc.scale(adj, a), r2), negate=True)
        elif op == Op.EXP:
            acc.add(a, acc.scale(adj, nid))
        elif op == Op.SQRT:
            acc.add(a, g.div(adj, g.add(nid, nid)))
        elif op == Op.POW:
            p = g._val[nid]
            if p == 0.0:
                continue
            if p == 1.0:
                d = acc.one
            elif p == 2.0:
                d = g.mul(g.const(2.0), a)
            else:
                d = g.mul(g.const(p), g.node(Op.POW, a, exponent=p - 1.0))
            acc.add(a, acc.scale(adj, d))
        elif op in (Op.MIN, Op.MAX):
            # ties go to the left operand
            s = g.node(Op.STEP, b, a) if op == Op.MIN else g.node(Op.STEP, a, b)
            if g._dep[a]:
                acc.add(a, acc.scale(adj, s))
            if g._dep[b]:
                acc.add(b, acc.scale(adj, g.sub(acc.one, s)))
        # STEP, CONST, PARAM: zero derivative
    return done


def jacobian(g: ExprGraph, outputs: Sequence[int] | None = None,
             wrt: Sequence[int] | None = None) -> SparseJacobian:
    """Symbolic Jacobian of ``outputs`` with respect to variable slots ``wrt``.

    One reverse sweep per output row.  Derivative expressions are appended
    to ``g``; entries whose adjoint never reaches a variable, or is the
    literal constant 0, are omitted.
    """
    outputs = list(g.outputs if outputs is None else outputs)
    wrt = list(range(g.n_vars) if wrt is None else wrt)
    col_of = {}
    for j, slot in enumerate(wrt):
        nid = g._vars.get(slot)
        if nid is not None:
            col_of[nid] = j
    entries = []
    for r, out in enumerate(outputs):
        adj = _sweep(g, out)
        row = []
        for nid, j in col_of.items():
            d = adj.get(nid)
            if d is not None and not g.is_const(d, 0.0):
                row.append((r, j, d))
        entries.extend(sorted(row))
    return SparseJacobian(len(outputs), len(wrt), tuple(entries))


def gradient(g: ExprGraph, output: int, wrt: Sequence[int] | None = None) -> list[int]:
    """Dense list of gradient node ids (constant 0 where structurally zero)."""
    jac = jacobian(g, [output], wrt)
    grad = [g.const(0.0)] * jac.n_cols
    for _, j, d in jac.entries:
        grad[j] = d
    return grad


@dataclass
class GraphStats:
    node_count: int
    op_histogram: dict = field(default_factory=dict)
    depth: int = 0


def graph_stats(g: ExprGraph, outputs: Sequence[int] | None = None) -> GraphStats:
    """Counts over the whole graph, or over the cone of ``outputs`` if given."""
    if outputs is None:
        ids = np.arange(len(g))
    else:
        ids = g.cone(list(outputs))
    if len(ids) == 0:
        return GraphStats(0, {}, 0)
    op, a, b, _ = g.arrays()
    hist = Counter(Op(int(o)).name.lower() for o in op[ids])
    # longest path, counting nodes; leaves have depth 1
    depth = np.zeros(len(g), dtype=np.int64)
    sub_op, sa, sb = op[ids], a[ids], b[ids]
    leaf = sa < 0
    sa = np.where(leaf, 0, sa)
    sb = np.where(sb < 0, sa, sb)
    while True:
        new = np.where(leaf, 1, np.maximum(depth[sa], depth[sb]) + 1)
        if np.array_equal(new, depth[ids]):
            break
        depth[ids] = new
    return GraphStats(int(len(ids)), dict(hist), int(depth[ids].max()))
