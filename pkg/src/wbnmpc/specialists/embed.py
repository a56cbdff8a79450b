"""Symbolic embedding of frozen specialists and the convex ensemble graph."""
from __future__ import annotations

from ..symgraph import ExprGraph, Op, Sym, sym
from ..vehicle import N_CONTROL, N_STATE
from .net import N_IN, SpecialistNet


def embed_net(g: ExprGraph, feats, net: SpecialistNet, rows=None) -> list[Sym]:
    """Append ``net``'s forward pass on symbolic ``feats`` to ``g``.

    Z-score normalisation, affine layers (balanced sums), Tanh and output
    de-normalisation are all explicit nodes; weights are constants.
    """
    if len(feats) != N_IN:
        raise ValueError(f"expected {N_IN} features, got {len(feats)}")
    h = [g.div(g.sub(f.id, g.const(m)), g.const(s))
         for f, m, s in zip(feats, net.input_mean, net.input_std)]
    Ws, bs = net.weights
    last = len(Ws) - 1
    for li, (W, b) in enumerate(zip(Ws, bs)):
        keep = range(W.shape[0]) if li < last or rows is None else rows
        nxt = []
        for i in keep:
            terms = [g.mul(g.const(W[i, j]), h[j]) for j in range(W.shape[1])]
            z = g.add(g.sum(terms), g.const(b[i]))
            nxt.append(g.node(Op.TANH, z) if li < last else z)
        h = nxt
    rows = range(len(h)) if rows is None else rows
    return [Sym(g, g.add(g.mul(hk, g.const(net.output_std[r])), g.const(net.output_mean[r])))
            for hk, r in zip(h, rows)]


def embed_symbolic(net: SpecialistNet) -> ExprGraph:
    """Standalone graph: 5 variable slots (features), 6 outputs."""
    g = ExprGraph(N_IN, 0)
    out = embed_net(g, sym.variables(g), net)
    g.set_outputs(o.id for o in out)
    return g


def specialist_dynamic_rows(g: ExprGraph, xs, us, spec) -> list[Sym]:
    """Three dynamic-row handles for a net or exact-ODE specialist."""
    if isinstance(spec, SpecialistNet):
        return embed_net(g, [xs[3], xs[4], xs[5], us[0], us[1]], spec, rows=(3, 4, 5))
    return spec.embed(g, xs, us)


def kinematic_rows(xs) -> list[Sym]:
    psi, vx, vy, om = xs[2], xs[3], xs[4], xs[5]
    c, s = sym.cos(psi), sym.sin(psi)
    return [vx * c - vy * s, vx * s + vy * c, om]


def embed_ensemble(g: ExprGraph, xs, us, lib, ws) -> list[Sym]:
    """Six derivative handles: shared kinematics plus mixed dynamic rows."""
    per = [specialist_dynamic_rows(g, xs, us, s) for s in lib.specialists]
    dyn = []
    for k in range(3):
        terms = [g.mul(w.id, rows[k].id) for w, rows in zip(ws, per)]
        dyn.append(Sym(g, g.sum(terms)))
    return kinematic_rows(xs) + dyn


def build_ensemble(lib) -> ExprGraph:
    """Ensemble dynamics with 8 variable slots and one weight parameter per
    specialist."""
    g = ExprGraph(N_STATE + N_CONTROL, len(lib))
    v = sym.variables(g)
    out = embed_ensemble(g, v[:N_STATE], v[N_STATE:], lib, sym.parameters(g))
    g.set_outputs(o.id for o in out)
    return g

