import os
import subprocess
import sys

import numpy as np
import pytest

from wbnmpc import governor
from wbnmpc.symgraph import Tape, available_backends
from wbnmpc.vehicle import build_parametric_graph, nominal_params

PROBE = ("import wbnmpc.symgraph.tape as t, wbnmpc.governor as g;"
         "print(t._default_backend(), g.USE_KERNEL)")


def _probe(env_value):
    env = dict(os.environ)
    env.pop("WBNMPC_BACKEND", None)
    if env_value is not None:
        env["WBNMPC_BACKEND"] = env_value
    return subprocess.run([sys.executable, "-c", PROBE], env=env, capture_output=True, text=True,
                          check=True).stdout.split()


def test_environment_forces_python_fallback():
    assert _probe("python") == ["python", "False"]


@pytest.mark.skipif(len(available_backends()) < 2, reason="compiled kernels not built")
def test_compiled_backend_is_default():
    assert _probe(None) == ["compiled", "True"]


@pytest.mark.skipif(len(available_backends()) < 2, reason="compiled kernels not built")
def test_vehicle_tapes_agree_across_backends(rng):
    g = build_parametric_graph()
    ids = list(g.outputs)
    tc, tp = Tape(g, ids, backend="compiled"), Tape(g, ids, backend="python")
    p = nominal_params().as_vector()
    Z = np.c_[rng.normal(size=(200, 3)), rng.uniform(0.3, 2.5, 200), rng.normal(scale=0.3, size=(200, 2)),
              rng.uniform(-0.35, 0.35, 200), rng.uniform(-0.1, 1, 200)]
    np.testing.assert_allclose(tc.eval_batch(Z, p), tp.eval_batch(Z, p), rtol=1e-13, atol=1e-15)


def test_simplex_paths_agree_on_governor_sizes(rng):
    if governor._simplex_kernel is None:
        pytest.skip("compiled kernels not built")
    for n in (2, 5, 8):
        A = rng.normal(size=(60, n))
        b = rng.normal(size=60)
        wk, fk = governor.simplex_lstsq(A, b, use_kernel=True)
        wn, fn = governor.simplex_lstsq(A, b, use_kernel=False)
        assert fk == pytest.approx(fn, rel=1e-10)
        np.testing.assert_allclose(wk, wn, atol=1e-8)
