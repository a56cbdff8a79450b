"""Flat evaluation plans for expression graphs.

A :class:`Tape` is the cone of a set of outputs, renumbered densely in
topological order.  Two interchangeable backends execute it:

``compiled``
    the Cython interpreter in ``_tape_kernel`` (one pass over the
    instructions per point);
``python``
    a numpy fallback that groups instructions by (depth level, opcode) and
    runs each group as one vectorised call, batched across points.

The compiled backend is used when the extension imports, unless
``WBNMPC_BACKEND=python`` is set.
"""
from __future__ import annotations

import os

import numpy as np

from .graph import DomainError, ExprGraph, Op

try:  # pragma: no cover - depends on the build
    from . import _tape_kernel
except ImportError:  # pragma: no cover
    _tape_kernel = None

_ERR = {1: "division by exact zero", 2: "sqrt of negative value", 3: "invalid power"}


def available_backends() -> list[str]:
    return (["compiled"] if _tape_kernel is not None else []) + ["python"]


def _default_backend() -> str:
    want = os.environ.get("WBNMPC_BACKEND", "").strip().lower()
    if want == "python" or _tape_kernel is None:
        return "python"
    return "compiled"


BACKEND = _default_backend()


def set_backend(name: str) -> None:
    """Select the backend for tapes created from now on."""
    global BACKEND
    if name not in available_backends():
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    BACKEND = name


class Tape:
    """Immutable instruction tape for ``outputs`` of ``graph``.

    Safe to share between threads: every evaluation uses its own scratch
    buffer unless the caller passes one in.
    """

    def __init__(self, graph: ExprGraph, outputs, backend: str | None = None):
        outputs = np.asarray(outputs, dtype=np.int64)
        self.n_vars = graph.n_vars
        self.n_params = graph.n_params
        self.backend = backend or BACKEND
        ids = graph.cone(outputs.tolist())
        op, a, b, val = graph.arrays()
        remap = np.full(len(graph), -1, dtype=np.int64)
        remap[ids] = np.arange(len(ids))
        ca, cb = a[ids], b[ids]
        self.op = np.ascontiguousarray(op[ids], dtype=np.int32)
        self.a = np.ascontiguousarray(np.where(ca >= 0, remap[np.maximum(ca, 0)], -1), dtype=np.int32)
        self.b = np.ascontiguousarray(np.where(cb >= 0, remap[np.maximum(cb, 0)], -1), dtype=np.int32)
        self.c = np.ascontiguousarray(val[ids], dtype=np.float64)
        self.out = np.ascontiguousarray(remap[outputs], dtype=np.int32)
        self.source_ids = ids
        self._plan = None

    def __len__(self) -> int:
        return len(self.op)

    @property
    def n_outputs(self) -> int:
        return len(self.out)

    # ------------------------------------------------------------------
    def _check_inputs(self, X, P):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        if X.shape[1] != self.n_vars:
            if self.n_vars == 0 and X.size == 0:
                X = np.zeros((max(X.shape[0], 1), 0))
            else:
                raise ValueError(f"expected {self.n_vars} variables, got {X.shape[1]}")
        P = np.asarray(P, dtype=np.float64)
        if P.ndim < 2:
            P = P.reshape(1, -1) if P.size else np.zeros((1, 0))
        P = np.ascontiguousarray(P)
        if P.shape[1] != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {P.shape[1]}")
        if P.shape[0] not in (1, X.shape[0]):
            raise ValueError("parameter rows must be 1 or match the number of points")
        if np.isnan(X).any() or np.isnan(P).any():
            raise ValueError("NaN input")
        return X, P

    def eval(self, x=(), p=(), work: np.ndarray | None = None) -> np.ndarray:
        """Evaluate at a single point; returns a 1-D output vector."""
        return self.eval_batch(np.asarray(x, dtype=np.float64).reshape(1, -1), p, work)[0]

    def eval_batch(self, X, P=(), work: np.ndarray | None = None) -> np.ndarray:
        """Evaluate at every row of ``X``; returns ``(npts, n_outputs)``."""
        X, P = self._check_inputs(X, P)
        if len(self.op) == 0:
            return np.zeros((X.shape[0], 0))
        if self.backend == "compiled":
            return self._eval_compiled(X, P, work)
        return self._eval_python(X, P)

    def _eval_compiled(self, X, P, work):
        Y = np.empty((X.shape[0], len(self.out)))
        if work is None or work.shape[0] < len(self.op):
            work = np.empty(len(self.op))
        bad, kind = _tape_kernel.run_batch(self.op, self.a, self.b, self.c, X, P, self.out, Y, work)
        if bad >= 0:
            raise DomainError(f"{_ERR[kind]} at tape node {bad}")
        return Y

    # --- numpy fallback -----------------------------------------------------
    def _build_plan(self):
        n = len(self.op)
        op = self.op
        leaf = op <= Op.VAR
        a = np.where(self.a >= 0, self.a, 0)
        b = np.where(self.b >= 0, self.b, a)
        level = np.zeros(n, dtype=np.int64)
        # longest-path levels by relaxation; converges after depth sweeps
        while True:
            new = np.where(leaf, 0, np.maximum(level[a], level[b]) + 1)
            if np.array_equal(new, level):
                break
            level = new
        inner = np.flatnonzero(~leaf)
        order = inner[np.lexsort((op[inner], level[inner]))]
        key = level[order] * 32 + op[order]
        cuts = np.flatnonzero(np.diff(key)) + 1
        groups = []
        for idx in np.split(order, cuts):
            groups.append((int(op[idx[0]]), idx, self.a[idx].astype(np.int64),
                           self.b[idx].astype(np.int64), self.c[idx][:, None]))
        self._plan = dict(
            const=np.flatnonzero(op == Op.CONST),
            var=np.flatnonzero(op == Op.VAR),
            param=np.flatnonzero(op == Op.PARAM),
            groups=groups,
        )
        return self._plan

    def _eval_python(self, X, P):
        plan = self._plan or self._build_plan()
        npts = X.shape[0]
        V = np.empty((len(self.op), npts))
        ci = plan["const"]
        V[ci] = self.c[ci][:, None]
        vi = plan["var"]
        V[vi] = X.T[self.c[vi].astype(np.int64)]
        pi = plan["param"]
        if len(pi):
            Pt = P.T[self.c[pi].astype(np.int64)]
            V[pi] = Pt if P.shape[0] == npts else np.broadcast_to(Pt, (len(pi), npts))
        with np.errstate(all="ignore"):
            for o, out, ia, ib, ex in plan["groups"]:
                x = V[ia]
                if o == Op.MUL:
                    V[out] = x * V[ib]
                elif o == Op.ADD:
                    V[out] = x + V[ib]
                elif o == Op.TANH:
                    V[out] = np.tanh(x)
                elif o == Op.SUB:
                    V[out] = x - V[ib]
                elif o == Op.DIV:
                    y = V[ib]
                    if (y == 0.0).any():
                        raise DomainError(_ERR[1])
                    V[out] = x / y
                elif o == Op.NEG:
                    V[out] = -x
                elif o == Op.SIN:
                    V[out] = np.sin(x)
                elif o == Op.COS:
                    V[out] = np.cos(x)
                elif o == Op.TAN:
                    V[out] = np.tan(x)
                elif o == Op.ATAN:
                    V[out] = np.arctan(x)
                elif o == Op.ATAN2:
                    V[out] = np.arctan2(x, V[ib])
                elif o == Op.EXP:
                    V[out] = np.exp(x)
                elif o == Op.SQRT:
                    if (x < 0.0).any():
                        raise DomainError(_ERR[2])
                    V[out] = np.sqrt(x)
                elif o == Op.POW:
                    bad = ((x < 0.0) & (ex != np.floor(ex))) | ((x == 0.0) & (ex < 0.0))
                    if bad.any():
                        raise DomainError(_ERR[3])
                    V[out] = np.power(x, ex)
                elif o == Op.MIN:
                    y = V[ib]
                    V[out] = np.where(x <= y, x, y)
                elif o == Op.MAX:
                    y = V[ib]
                    V[out] = np.where(x >= y, x, y)
                elif o == Op.STEP:
                    V[out] = (x >= V[ib]).astype(np.float64)
        return np.ascontiguousarray(V[self.out].T)
