"""Hash-consed scalar expression DAG.

Nodes live in flat typed arrays and are only ever appended, so a node id is
stable for the lifetime of the graph and every child id is smaller than its
parent id.  Structurally identical ``(op, children)`` pairs resolve to a single
id, which is what gives the graph its shared subexpressions.
"""
from __future__ import annotations

import math
from array import array
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np


class DomainError(ValueError):
    """Raised when an operation is evaluated outside its domain."""


class Op(IntEnum):
    CONST = 0
    PARAM = 1
    VAR = 2
    ADD = 3
    SUB = 4
    MUL = 5
    DIV = 6
    NEG = 7
    SIN = 8
    COS = 9
    TAN = 10
    ATAN = 11
    ATAN2 = 12
    TANH = 13
    EXP = 14
    SQRT = 15
    POW = 16
    MIN = 17
    MAX = 18
    # 1.0 if a >= b else 0.0; only emitted by differentiation of MIN/MAX
    STEP = 19


LEAF_OPS = (Op.CONST, Op.PARAM, Op.VAR)
UNARY_OPS = frozenset(
    (Op.NEG, Op.SIN, Op.COS, Op.TAN, Op.ATAN, Op.TANH, Op.EXP, Op.SQRT, Op.POW)
)
BINARY_OPS = frozenset(
    (Op.ADD, Op.SUB, Op.MUL, Op.DIV, Op.ATAN2, Op.MIN, Op.MAX, Op.STEP)
)
OP_NAMES = {op: op.name.lower() for op in Op}
_NAME_TO_OP = {v: k for k, v in OP_NAMES.items()}


def _scalar_apply(op: Op, x: float, y: float, p: float) -> float:
    """Reference scalar semantics, used for constant folding."""
    if op == Op.ADD:
        return x + y
    if op == Op.SUB:
        return x - y
    if op == Op.MUL:
        return x * y
    if op == Op.DIV:
        if y == 0.0:
            raise DomainError("division by exact zero")
        return x / y
    if op == Op.NEG:
        return -x
    if op == Op.SIN:
        return math.sin(x)
    if op == Op.COS:
        return math.cos(x)
    if op == Op.TAN:
        return math.tan(x)
    if op == Op.ATAN:
        return math.atan(x)
    if op == Op.ATAN2:
        return math.atan2(x, y)
    if op == Op.TANH:
        return math.tanh(x)
    if op == Op.EXP:
        return math.exp(x)
    if op == Op.SQRT:
        if x < 0.0:
            raise DomainError("sqrt of negative value")
        return math.sqrt(x)
    if op == Op.POW:
        if x < 0.0 and p != int(p):
            raise DomainError("non-integer power of negative value")
        if x == 0.0 and p < 0.0:
            raise DomainError("negative power of zero")
        return float(x**p)
    if op == Op.MIN:
        return x if x <= y else y
    if op == Op.MAX:
        return x if x >= y else y
    if op == Op.STEP:
        return 1.0 if x >= y else 0.0
    raise ValueError(f"cannot fold {op!r}")


def _const_key(v: float):
    # keep +0.0 and -0.0 apart
    if v == 0.0:
        return "+0" if math.copysign(1.0, v) > 0 else "-0"
    return v


class ExprGraph:
    """Append-only symbolic DAG with hash-consing.

    Variables and parameters are addressed by slot.  Outputs are an ordered
    list of node ids; jacobian and stage construction append further nodes to
    the same graph, so derivative expressions share structure with the
    primal expressions.
    """

    def __init__(self, n_vars: int = 0, n_params: int = 0):
        self.n_vars = int(n_vars)
        self.n_params = int(n_params)
        self._op = array("b")
        self._a = array("l")
        self._b = array("l")
        self._val = array("d")
        self._dep = bytearray()
        self._index: dict[int, int] = {}
        self._pow_index: dict[tuple[int, float], int] = {}
        self._consts: dict[object, int] = {}
        self._vars: dict[int, int] = {}
        self._params: dict[int, int] = {}
        self.outputs: list[int] = []
        self._tapes: dict = {}

    def __len__(self) -> int:
        return len(self._op)

    @property
    def node_count(self) -> int:
        return len(self._op)

    # --- node access ---------------------------------------------------
    def op(self, nid: int) -> Op:
        return Op(self._op[nid])

    def children(self, nid: int) -> tuple[int, ...]:
        a, b = self._a[nid], self._b[nid]
        if a < 0:
            return ()
        if b < 0:
            return (a,)
        return (a, b)

    def value(self, nid: int) -> float:
        """Constant value, power exponent or slot index, depending on op."""
        return self._val[nid]

    def is_const(self, nid: int, value: float | None = None) -> bool:
        if self._op[nid] != Op.CONST:
            return False
        return value is None or self._val[nid] == value

    def depends_on_vars(self, nid: int) -> bool:
        return bool(self._dep[nid])

    # --- construction ------------------------------------------------
    def _append(self, op: int, a: int, b: int, val: float, dep: int) -> int:
        nid = len(self._op)
        self._op.append(op)
        self._a.append(a)
        self._b.append(b)
        self._val.append(val)
        self._dep.append(dep)
        return nid

    def const(self, value: float) -> int:
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"non-finite constant {value!r}")
        key = _const_key(value)
        nid = self._consts.get(key)
        if nid is None:
            nid = self._append(Op.CONST, -1, -1, value, 0)
            self._consts[key] = nid
        return nid

    def var(self, slot: int) -> int:
        if not 0 <= slot < self.n_vars:
            raise IndexError(f"variable slot {slot} out of range [0, {self.n_vars})")
        nid = self._vars.get(slot)
        if nid is None:
            nid = self._append(Op.VAR, -1, -1, float(slot), 1)
            self._vars[slot] = nid
        return nid

    def param(self, slot: int) -> int:
        if not 0 <= slot < self.n_params:
            raise IndexError(f"parameter slot {slot} out of range [0, {self.n_params})")
        nid = self._params.get(slot)
        if nid is None:
            nid = self._append(Op.PARAM, -1, -1, float(slot), 0)
            self._params[slot] = nid
        return nid

    def _check_child(self, c: int) -> None:
        if not 0 <= c < len(self._op):
            raise IndexError(f"child id {c} out of range")

    def node(self, op: Op, *children: int, exponent: float | None = None) -> int:
        """Create (or look up) a non-leaf node."""
        op = Op(op)
        if op in LEAF_OPS:
            raise ValueError("use const/var/param for leaf nodes")
        want = 1 if op in UNARY_OPS else 2
        if len(children) != want:
            raise ValueError(f"{op.name} takes {want} children, got {len(children)}")
        for c in children:
            self._check_child(c)
        if op == Op.POW:
            if exponent is None:
                raise ValueError("POW requires an exponent")
            return self._pow(children[0], float(exponent))
        a = children[0]
        b = children[1] if want == 2 else -1
        ops = self._op
        if ops[a] == Op.CONST and (b < 0 or ops[b] == Op.CONST):
            vb = self._val[b] if b >= 0 else 0.0
            return self.const(_scalar_apply(op, self._val[a], vb, 0.0))
        key = (((a + 1) << 27) | (b + 1)) << 5 | int(op)
        nid = self._index.get(key)
        if nid is None:
            dep = self._dep[a] | (self._dep[b] if b >= 0 else 0)
            nid = self._append(op, a, b, 0.0, dep)
            self._index[key] = nid
        return nid

    def _pow(self, a: int, p: float) -> int:
        if self._op[a] == Op.CONST:
            return self.const(_scalar_apply(Op.POW, self._val[a], 0.0, p))
        key = (a, p)
        nid = self._pow_index.get(key)
        if nid is None:
            nid = self._append(Op.POW, a, -1, p, self._dep[a])
            self._pow_index[key] = nid
        return nid

    # shorthands used by the builders and by differentiation
    def add(self, a: int, b: int) -> int:
        return self.node(Op.ADD, a, b)

    def sub(self, a: int, b: int) -> int:
        return self.node(Op.SUB, a, b)

    def mul(self, a: int, b: int) -> int:
        return self.node(Op.MUL, a, b)

    def div(self, a: int, b: int) -> int:
        return self.node(Op.DIV, a, b)

    def neg(self, a: int) -> int:
        return self.node(Op.NEG, a)

    def sum(self, ids: Sequence[int]) -> int:
        """Balanced pairwise sum; keeps tree depth logarithmic."""
        ids = list(ids)
        if not ids:
            return self.const(0.0)
        while len(ids) > 1:
            nxt = [self.add(ids[i], ids[i + 1]) for i in range(0, len(ids) - 1, 2)]
            if len(ids) % 2:
                nxt.append(ids[-1])
            ids = nxt
        return ids[0]

    def set_outputs(self, ids: Iterable[int]) -> None:
        ids = [int(i) for i in ids]
        for i in ids:
            self._check_child(i)
        self.outputs = ids

    # --- evaluation ----------------------------------------------------
    def compile(self, outputs: Sequence[int] | None = None):
        """Return the (cached) evaluation tape for ``outputs``."""
        from .tape import Tape

        outs = tuple(self.outputs if outputs is None else (int(o) for o in outputs))
        key = (outs, len(self._op))
        tape = self._tapes.get(key)
        if tape is None:
            tape = Tape(self, outs)
            self._tapes[key] = tape
        return tape

    def eval(self, vars=(), params=(), outputs: Sequence[int] | None = None) -> np.ndarray:
        return self.compile(outputs).eval(vars, params)

    # --- traversal helpers ----------------------------------------------
    def cone(self, outputs: Sequence[int]) -> np.ndarray:
        """Sorted ids of all nodes reachable from ``outputs``."""
        if not len(outputs):
            return np.zeros(0, dtype=np.int64)
        top = max(outputs)
        mark = bytearray(top + 1)
        for o in outputs:
            mark[o] = 1
        a, b = self._a, self._b
        for nid in range(top, -1, -1):
            if mark[nid]:
                ca = a[nid]
                if ca >= 0:
                    mark[ca] = 1
                    cb = b[nid]
                    if cb >= 0:
                        mark[cb] = 1
        return np.flatnonzero(np.frombuffer(bytes(mark), dtype=np.uint8))

    def arrays(self):
        """Numpy views of (op, a, b, val) for the whole graph."""
        return (
            np.frombuffer(self._op, dtype=np.int8),
            np.frombuffer(self._a, dtype=np.dtype(f"i{self._a.itemsize}")),
            np.frombuffer(self._b, dtype=np.dtype(f"i{self._b.itemsize}")),
            np.frombuffer(self._val, dtype=np.float64),
        )

    # --- text dump ---------------------------------------------------------
    def dumps(self, outputs: Sequence[int] | None = None) -> str:
        """Line-oriented dump ``id op[attr] child_ids...`` with outputs footer."""
        outs = list(self.outputs if outputs is None else outputs)
        lines = [f"# exprgraph v1 n_vars={self.n_vars} n_params={self.n_params}"]
        for nid in range(len(self._op)):
            op = Op(self._op[nid])
            name = OP_NAMES[op]
            if op == Op.CONST:
                name = f"{name}[{self._val[nid]!r}]"
            elif op in (Op.VAR, Op.PARAM):
                name = f"{name}[{int(self._val[nid])}]"
            elif op == Op.POW:
                name = f"{name}[{self._val[nid]!r}]"
            kids = " ".join(str(c) for c in self.children(nid))
            lines.append(f"{nid} {name} {kids}".rstrip())
        lines.append("outputs " + " ".join(str(o) for o in outs))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ExprGraph":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = lines[0].split()
        if header[:3] != ["#", "exprgraph", "v1"]:
            raise ValueError("not an exprgraph v1 dump")
        meta = dict(tok.split("=") for tok in header[3:])
        g = cls(int(meta["n_vars"]), int(meta["n_params"]))
        remap: dict[int, int] = {}
        for ln in lines[1:]:
            parts = ln.split()
            if parts[0] == "outputs":
                g.set_outputs(remap[int(t)] for t in parts[1:])
                break
            nid, name = int(parts[0]), parts[1]
            attr = None
            if "[" in name:
                name, attr = name[:-1].split("[")
            op = _NAME_TO_OP[name]
            kids = [remap[int(t)] for t in parts[2:]]
            if op == Op.CONST:
                new = g.const(float(attr))
            elif op == Op.VAR:
                new = g.var(int(attr))
            elif op == Op.PARAM:
                new = g.param(int(attr))
            elif op == Op.POW:
                new = g.node(op, *kids, exponent=float(attr))
            else:
                new = g.node(op, *kids)
            remap[nid] = new
        return g
