"""Compiled vs pure-Python kernels.

Times the tape interpreter on the parametric and ensemble stage Jacobian
tapes, and the simplex least-squares support enumeration, on both
backends.  Usage::

    python benchmarks/bench_backends.py [--repeats 200]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from wbnmpc import governor
from wbnmpc.scenarios.experiments import default_ode_library
from wbnmpc.specialists.embed import build_ensemble
from wbnmpc.symgraph import tape as tape_mod
from wbnmpc.symgraph.diff import jacobian
from wbnmpc.symgraph.tape import Tape
from wbnmpc.vehicle import build_parametric_graph, nominal_params


def _median_time(fn, repeats):
    fn()
    ts = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t)
    return float(np.median(ts))


def stage_tape(g, backend):
    jac = jacobian(g, list(g.outputs))
    return Tape(g, list(g.outputs) + jac.node_ids, backend=backend)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=200)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    backends = tape_mod.available_backends()
    print(f"backends: {', '.join(backends)}")

    lib = default_ode_library()
    models = {"parametric": (build_parametric_graph(), nominal_params().as_vector()),
              "ensemble": (build_ensemble(lib), np.full(len(lib), 1.0 / len(lib)))}
    x = np.array([0.1, -0.2, 0.3, 1.4, 0.05, 0.4, 0.1, 0.3])
    print(f"\n{'tape':<12}{'nodes':>8}" + "".join(f"{b + ' 1pt (us)':>20}{b + ' 64pt (us)':>20}" for b in backends))
    for name, (g, p) in models.items():
        cells = []
        n = None
        for b in backends:
            tp = stage_tape(g, b)
            n = len(tp)
            X = x + 0.01 * rng.standard_normal((64, len(x)))
            cells.append(1e6 * _median_time(lambda: tp.eval(x, p), args.repeats))
            cells.append(1e6 * _median_time(lambda: tp.eval_batch(X, p), args.repeats))
        print(f"{name:<12}{n:>8}" + "".join(f"{c:>20.1f}" for c in cells))

    print(f"\n{'simplex N':<12}" + "".join(f"{lbl:>20}" for lbl in ("compiled (us)", "numpy (us)")))
    for N in (2, 3, 8):
        A = rng.standard_normal((40, N))
        bvec = A @ rng.dirichlet(np.ones(N))
        cells = []
        for use in (True, False):
            if use and governor._simplex_kernel is None:
                cells.append(float("nan"))
                continue
            cells.append(1e6 * _median_time(lambda: governor.simplex_lstsq(A, bvec, use_kernel=use), args.repeats))
        print(f"{N:<12}" + "".join(f"{c:>20.1f}" for c in cells))


if __name__ == "__main__":
    main()
