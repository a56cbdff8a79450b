import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wbnmpc.symgraph import (DomainError, ExprGraph, Op, Tape, available_backends, gradient, graph_stats,
                             jacobian, sym, variables)


def _fd(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    J = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        J.append((f(x + e) - f(x - e)) / (2 * h))
    return np.array(J).T


def test_hash_consing_shares_nodes():
    g = ExprGraph(2)
    x, y = variables(g)
    a = sym.sin(x * y)
    b = sym.sin(x * y)
    assert a.id == b.id
    n = len(g)
    _ = x * y
    assert len(g) == n


def test_constant_folding():
    g = ExprGraph(1)
    c = g.node(Op.MUL, g.const(2.0), g.const(3.5))
    assert g.op(c) == Op.CONST and g.value(c) == 7.0
    with pytest.raises(DomainError):
        g.node(Op.DIV, g.const(1.0), g.const(0.0))
    with pytest.raises(DomainError):
        g.node(Op.SQRT, g.const(-1.0))


def test_signed_zero_constants_stay_distinct():
    g = ExprGraph()
    assert g.const(0.0) != g.const(-0.0)


def test_children_precede_parents():
    g = ExprGraph(3)
    x, y, z = variables(g)
    out = sym.atan2(x * y + z, sym.exp(z) - x) ** 3
    for nid in range(len(g)):
        assert all(c < nid for c in g.children(nid))
    assert out.id == len(g) - 1


def test_node_arity_and_range_checks():
    g = ExprGraph(1)
    x = g.var(0)
    with pytest.raises(ValueError):
        g.node(Op.ADD, x)
    with pytest.raises(IndexError):
        g.node(Op.SIN, 99)
    with pytest.raises(ValueError):
        g.node(Op.POW, x)


def test_dump_roundtrip():
    g = ExprGraph(2, 1)
    x, y = variables(g)
    p = sym.Sym(g, g.param(0))
    f = sym.tanh(x * p) + sym.fmax(y, 0.5) ** 1.5
    g.set_outputs([f.id])
    g2 = ExprGraph.loads(g.dumps())
    z = np.array([0.3, 1.2])
    assert g2.eval(z, [0.7])[0] == pytest.approx(g.eval(z, [0.7])[0], abs=0)


@pytest.mark.parametrize("backend", available_backends())
def test_tape_matches_math(backend):
    g = ExprGraph(2)
    x, y = variables(g)
    exprs = [x + y, x - y, x * y, x / y, -x, sym.sin(x), sym.cos(x), sym.tan(x), sym.atan(x),
             sym.atan2(x, y), sym.tanh(x), sym.exp(x), sym.sqrt(y), y ** 2.5,
             sym.fmin(x, y), sym.fmax(x, y)]
    ref = lambda a, b: [a + b, a - b, a * b, a / b, -a, math.sin(a), math.cos(a), math.tan(a), math.atan(a),
                        math.atan2(a, b), math.tanh(a), math.exp(a), math.sqrt(b), b ** 2.5, min(a, b),
                        max(a, b)]
    tape = Tape(g, [e.id for e in exprs], backend=backend)
    for a, b in [(0.3, 1.7), (-1.1, 0.4), (2.0, 2.0)]:
        np.testing.assert_allclose(tape.eval([a, b]), ref(a, b), rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize("backend", available_backends())
def test_tape_domain_errors(backend):
    g = ExprGraph(1)
    (x,) = variables(g)
    with pytest.raises(DomainError):
        Tape(g, [sym.sqrt(x).id], backend=backend).eval([-1.0])
    with pytest.raises(DomainError):
        Tape(g, [(1.0 / x).id], backend=backend).eval([0.0])


def test_tape_rejects_nan_and_bad_shapes():
    g = ExprGraph(2)
    x, y = variables(g)
    t = g.compile([(x * y).id])
    with pytest.raises(ValueError):
        t.eval([np.nan, 1.0])
    with pytest.raises(ValueError):
        t.eval([1.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-2.0, 2.0), min_size=3, max_size=3))
def test_backends_agree(z):
    if len(available_backends()) < 2:
        pytest.skip("compiled backend not built")
    g = ExprGraph(3)
    x, y, w = variables(g)
    f = [sym.tanh(x * y - w) * sym.cos(w), sym.atan(x / (1.0 + y * y)), sym.fmin(x, w) + sym.exp(-y * y)]
    ids = [e.id for e in f]
    a = Tape(g, ids, backend="compiled").eval(z)
    b = Tape(g, ids, backend="python").eval(z)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-14)


def test_batch_evaluation_matches_pointwise(rng):
    g = ExprGraph(2, 1)
    x, y = variables(g)
    p = sym.Sym(g, g.param(0))
    t = g.compile([(sym.sin(x) * p + y).id])
    X = rng.normal(size=(50, 2))
    batch = t.eval_batch(X, [1.5])[:, 0]
    np.testing.assert_allclose(batch, [t.eval(r, [1.5])[0] for r in X], rtol=0, atol=0)


def _jac_check(expr_fn, n, points):
    g = ExprGraph(n)
    vs = variables(g)
    outs = [e.id for e in expr_fn(*vs)]
    J = jacobian(g, outs)
    tape = g.compile(J.node_ids)
    ftape = g.compile(outs)
    for z in points:
        Js = J.to_dense(tape.eval(z))
        Jf = _fd(lambda q: ftape.eval(q), z)
        np.testing.assert_allclose(Js, Jf, rtol=1e-6, atol=1e-8)


def test_jacobian_of_composite_matches_fd(rng):
    pts = rng.uniform(0.2, 1.5, size=(20, 3))
    _jac_check(lambda x, y, z: [sym.atan2(x * y, z + 1.0), sym.sqrt(x + y * z) / sym.exp(z),
                                (x - z) ** 3 + sym.tan(0.3 * y)], 3, pts)


def test_jacobian_sparsity_is_structural():
    g = ExprGraph(3)
    x, y, z = variables(g)
    J = jacobian(g, [(x * y).id, (z * 0.0 + 1.0).id])
    # 0 * z folds away, so row 1 has no entries
    assert {(r, c) for r, c, _ in J.entries} == {(0, 0), (0, 1)}
    assert J.nnz == 2 and J.density == pytest.approx(2 / 6)


def test_min_max_tie_goes_left():
    g = ExprGraph(2)
    x, y = variables(g)
    gm = gradient(g, sym.fmin(x, y).id)
    gx = gradient(g, sym.fmax(x, y).id)
    t = g.compile(gm + gx)
    assert list(t.eval([1.0, 1.0])) == [1.0, 0.0, 1.0, 0.0]
    assert list(t.eval([1.0, 2.0])) == [1.0, 0.0, 0.0, 1.0]


def test_graph_stats_counts_cone():
    g = ExprGraph(2)
    x, y = variables(g)
    a = sym.sin(x)
    b = a * y
    _unused = sym.cos(y)
    s = graph_stats(g, [b.id])
    assert s.node_count == 4
    assert s.op_histogram == {"var": 2, "sin": 1, "mul": 1}
    assert s.depth == 3


UNARY_CASES = {
    "neg": (lambda x: -x, lambda a: -a, (-3, 3)),
    "sin": (sym.sin, math.sin, (-3, 3)),
    "cos": (sym.cos, math.cos, (-3, 3)),
    "tan": (sym.tan, math.tan, (-1.4, 1.4)),
    "atan": (sym.atan, math.atan, (-3, 3)),
    "tanh": (sym.tanh, math.tanh, (-3, 3)),
    "exp": (sym.exp, math.exp, (-3, 3)),
    "sqrt": (sym.sqrt, math.sqrt, (1e-2, 4)),
    "pow": (lambda x: x ** 1.7, lambda a: a ** 1.7, (1e-2, 3)),
}
BINARY_CASES = {
    "add": lambda x, y: x + y, "sub": lambda x, y: x - y, "mul": lambda x, y: x * y,
    "div": lambda x, y: x / y, "atan2": sym.atan2, "min": sym.fmin, "max": sym.fmax,
}


@pytest.mark.parametrize("name", sorted(UNARY_CASES))
def test_unary_derivative_1000_points(name):
    fn, _, (lo, hi) = UNARY_CASES[name]
    g = ExprGraph(1)
    (x,) = variables(g)
    f = fn(x).id
    t = g.compile([f] + gradient(g, f))
    rng = np.random.default_rng(0)
    # stay 1e-4 away from the ends of the sampled domain
    for a in rng.uniform(lo + 1e-4, hi - 1e-4, 1000):
        val, d = t.eval([a])
        fd = (t.eval([a + 1e-7])[0] - t.eval([a - 1e-7])[0]) / 2e-7
        assert abs(d - fd) <= 1e-6 * max(1.0, abs(fd)), (name, a)


@pytest.mark.parametrize("name", sorted(BINARY_CASES))
def test_binary_derivative_1000_points(name):
    g = ExprGraph(2)
    x, y = variables(g)
    f = BINARY_CASES[name](x, y).id
    t = g.compile([f] + gradient(g, f))
    rng = np.random.default_rng(1)
    pts = np.c_[rng.uniform(-2, 2, 3000), rng.uniform(0.2, 2, 3000)]
    pts = pts[np.abs(pts[:, 0] - pts[:, 1]) > 1e-4][:1000]
    for z in pts:
        d = t.eval(z)[1:]
        for i in range(2):
            e = np.zeros(2)
            e[i] = 1e-7
            fd = (t.eval(z + e)[0] - t.eval(z - e)[0]) / 2e-7
            assert abs(d[i] - fd) <= 1e-6 * max(1.0, abs(fd)), (name, z, i)


def test_omitted_jacobian_entries_are_zero(rng):
    from wbnmpc.vehicle import build_parametric_graph, nominal_params
    g = build_parametric_graph(nominal_params())
    J = jacobian(g)
    full = g.compile([d for r in range(6) for d in gradient(g, g.outputs[r])])
    kept = {(r, c) for r, c, _ in J.entries}
    for _ in range(100):
        z = np.r_[rng.normal(size=3), rng.uniform(0.3, 2.5), rng.normal(scale=0.3, size=2),
                  rng.uniform(-0.35, 0.35), rng.uniform(-0.1, 1)]
        dense = full.eval(z).reshape(6, 8)
        for r in range(6):
            for c in range(8):
                if (r, c) not in kept:
                    assert dense[r, c] == 0.0


def test_building_model_twice_adds_nothing():
    from types import SimpleNamespace

    from wbnmpc.vehicle import PARAM_NAMES, build_parametric_graph, embed_dynamics
    g = build_parametric_graph()
    n = len(g)
    v = variables(g)
    p = SimpleNamespace(**{k: sym.Sym(g, g.param(i)) for i, k in enumerate(PARAM_NAMES)})
    embed_dynamics(g, v[:6], v[6:], p)
    assert len(g) == n


def test_eval_is_bit_identical(rng):
    g = ExprGraph(2)
    x, y = variables(g)
    t = g.compile([(sym.tanh(x * y) + sym.exp(-x)).id])
    z = rng.normal(size=2)
    a = t.eval(z).tobytes()
    assert all(t.eval(z).tobytes() == a for _ in range(10))
