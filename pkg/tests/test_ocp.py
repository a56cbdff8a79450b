import time

import numpy as np
import pytest

from wbnmpc.ocp import (OcpConfig, build_parametric_problem, cost, cost_gradient, nlp_jacobian_density,
                       nlp_jacobian_pattern, rebuild_jit_baseline, rollout, shift_warm_start, solve, solve_qp,
                       transcribe, update_params, update_weights)
from wbnmpc.ocp.problem import constraint_violation, project_feasible
from wbnmpc.scenarios import build_ensemble_problem, circle_track, make_reference
from wbnmpc.specialists import OdeSpecialist, SpecialistLibrary
from wbnmpc.vehicle import build_parametric_graph, make_regime

CFG = OcpConfig()


def _circle_case():
    track = circle_track(1.0)
    x0 = np.array([1.02, 0.0, np.pi / 2, 1.4, 0.0, 0.3])
    return x0, make_reference(track, x0, CFG)


@pytest.fixture(scope="module")
def parametric(base):
    return build_parametric_problem(base, CFG)


@pytest.fixture(scope="module")
def trio(base):
    regs = [base, make_regime(base, mu_scale=0.5), make_regime(base, mass_factor=1.2, drag_factor=1.4)]
    lib = SpecialistLibrary([OdeSpecialist(p) for p in regs])
    return regs, build_ensemble_problem(lib, CFG)


def test_qp_satisfies_kkt(rng):
    for _ in range(20):
        n = 6
        M = rng.normal(size=(n, n))
        G = M @ M.T + 0.1 * np.eye(n)
        c = rng.normal(size=n)
        A = np.vstack([np.eye(n), -np.eye(n), rng.normal(size=(3, n))])
        b = rng.uniform(0.05, 0.5, size=len(A))
        res = solve_qp(G, c, A, b)
        x = res.x
        assert res.converged
        assert np.all(A @ x <= b + 1e-10)
        W = res.active
        lam = np.linalg.lstsq(A[W].T, -(G @ x + c), rcond=None)[0] if W else np.zeros(0)
        np.testing.assert_allclose(G @ x + c + A[W].T @ lam, 0, atol=1e-9)
        assert np.all(lam >= -1e-9)
        np.testing.assert_allclose(A[W] @ x, b[W], atol=1e-10)


def test_qp_unconstrained_optimum_inside():
    G = np.diag([2.0, 4.0])
    res = solve_qp(G, np.array([-0.2, 0.4]), np.vstack([np.eye(2), -np.eye(2)]), np.ones(4))
    np.testing.assert_allclose(res.x, [0.1, -0.1])
    assert res.active == []
    with pytest.raises(ValueError):
        solve_qp(G, np.zeros(2), np.eye(2), -np.ones(2))


def test_cost_gradient_matches_fd(parametric, rng):
    x0, refs = _circle_case()
    U = np.c_[rng.uniform(-0.1, 0.1, CFG.H), rng.uniform(0.2, 0.5, CFG.H)]
    u_prev = np.array([0.02, 0.3])
    g = cost_gradient(parametric, x0, U, refs, u_prev)
    v = U.ravel()
    for i in range(len(v)):
        e = np.zeros_like(v)
        e[i] = 1e-6
        fd = (cost(parametric, x0, (v + e).reshape(U.shape), refs, u_prev)
              - cost(parametric, x0, (v - e).reshape(U.shape), refs, u_prev)) / 2e-6
        assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_solution_is_feasible_and_descends(parametric):
    x0, refs = _circle_case()
    rep = solve(parametric, x0, refs, u_prev=np.array([0.0, 0.0]))
    assert rep.converged
    assert rep.constraint_violation <= 1e-9
    assert rep.cost <= rep.initial_cost
    lo, hi = np.array(CFG.u_min), np.array(CFG.u_max)
    assert np.all(rep.u_star >= lo - 1e-12) and np.all(rep.u_star <= hi + 1e-12)
    d = np.diff(np.r_[0.0, rep.u_star[:, 0]])
    assert np.abs(d).max() <= CFG.ddelta_max + 1e-9
    # no feasible coordinate perturbation improves the cost to first order
    g = cost_gradient(parametric, x0, rep.u_star, refs, np.zeros(2))
    for i in range(len(g)):
        for s in (1e-5, -1e-5):
            v = rep.u_star.ravel().copy()
            v[i] += s
            if constraint_violation(CFG, v.reshape(-1, 2), np.zeros(2)) == 0:
                assert g[i] * s >= -1e-6


def test_straight_line_keeps_wheel_straight(parametric):
    x0 = np.array([0.0, 0.0, 0.0, CFG.v_ref, 0.0, 0.0])
    refs = np.c_[CFG.v_ref * CFG.Ts * np.arange(1, CFG.H + 1), np.zeros(CFG.H)]
    rep = solve(parametric, x0, refs)
    np.testing.assert_allclose(rep.u_star[:, 0], 0.0, atol=1e-10)
    xs = rollout(parametric, x0, rep.u_star)
    np.testing.assert_allclose(xs[:, 1], 0.0, atol=1e-10)


def test_vertex_weights_match_single_model(trio):
    regs, ens = trio
    x0, refs = _circle_case()
    for i, p in enumerate(regs):
        w = np.eye(len(regs))[i]
        a = solve(ens, x0, refs, w=w)
        b = solve(build_parametric_problem(p, CFG), x0, refs)
        np.testing.assert_allclose(a.u_star, b.u_star, atol=1e-8)


def test_jit_rebuild_reproduces_parametric(base):
    p = make_regime(base, mu_scale=0.5)
    x0, refs = _circle_case()
    jit, latency = rebuild_jit_baseline(p, CFG)
    assert jit.kind == "baked" and latency > 0
    par = build_parametric_problem(base, CFG)
    update_params(par, p)
    np.testing.assert_allclose(solve(jit, x0, refs).u_star, solve(par, x0, refs).u_star, atol=1e-10)


def test_explicit_update_is_cheap(parametric, base):
    x0, refs = _circle_case()
    solve(parametric, x0, refs)
    t_solve = min(solve(parametric, x0, refs).timing["total"] for _ in range(5))
    shifted = make_regime(base, mu_scale=0.5)
    t = []
    for _ in range(50):
        t0 = time.perf_counter()
        update_params(parametric, shifted)
        t.append(time.perf_counter() - t0)
    update_params(parametric, base)
    assert np.median(t) < 0.01 * t_solve


def test_warm_start_saves_iterations(parametric):
    track = circle_track(1.0)
    x0, refs = _circle_case()
    first = solve(parametric, x0, refs)
    x1 = rollout(parametric, x0, first.u_star)[1]
    refs1 = make_reference(track, x1, CFG)
    cold = solve(parametric, x1, refs1, u_prev=first.u_star[0])
    warm = solve(parametric, x1, refs1, warm_start=first.u_star, u_prev=first.u_star[0])
    assert warm.iterations <= cold.iterations
    assert warm.cost == pytest.approx(cold.cost, rel=1e-6, abs=1e-12)


def test_shift_warm_start():
    U = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(shift_warm_start(U), [[2, 3], [4, 5], [4, 5]])


def test_project_feasible_respects_rate_limit():
    U = np.array([[0.3, 2.0], [-0.3, -1.0], [0.0, 0.5]])
    cfg = OcpConfig(H=3)
    P = project_feasible(cfg, U, np.array([0.0, 0.0]))
    assert constraint_violation(cfg, P, np.zeros(2)) == 0.0
    np.testing.assert_allclose(P, [[0.05, 1.0], [0.0, -0.1], [0.0, 0.5]])


def test_density_formula(parametric, trio):
    _, ens = trio
    H = CFG.H
    for prob in (parametric, ens):
        rows, cols, nnz = nlp_jacobian_pattern(prob)
        assert (rows, cols) == (6 * (H + 1), 6 * (H + 1) + 2 * H)
        assert nnz == 6 + H * (6 + prob.jac.nnz)
        assert nlp_jacobian_density(prob) == pytest.approx(nnz / (rows * cols))
        assert prob.jac.nnz <= 48


def test_weights_rejected_off_simplex(trio, parametric):
    _, ens = trio
    x0, refs = _circle_case()
    for bad in ([0.5, 0.6, 0.0], [1.2, -0.2, 0.0], [np.nan, 0.5, 0.5], [0.5, 0.5]):
        with pytest.raises(ValueError):
            update_weights(ens, bad)
    with pytest.raises(ValueError):
        solve(ens, x0, refs)
    with pytest.raises(ValueError):
        solve(parametric, x0, refs, w=[1.0])
    with pytest.raises(ValueError):
        update_weights(parametric, [1.0])


def test_invalid_configs_rejected():
    for kw in (dict(H=0), dict(Ts=0.0), dict(Q_p=-1.0), dict(u_min=(0.4, 0.0), u_max=(0.35, 1.0)),
               dict(u_min=(0.0,)), dict(P=-1.0)):
        with pytest.raises(ValueError):
            OcpConfig(**kw)
    with pytest.raises(ValueError):
        transcribe(build_parametric_graph(), CFG, kind="mystery")


def test_warm_start_median_over_closed_loop(parametric, base):
    from wbnmpc.vehicle import plant_step
    track = circle_track(1.0)
    x = np.array([1.0, 0.0, np.pi / 2, 1.5, 0.0, 0.0])
    U, u_prev = None, np.zeros(2)
    warm, cold = [], []
    for _ in range(40):
        refs = make_reference(track, x, CFG)
        rw = solve(parametric, x, refs, warm_start=U, u_prev=u_prev)
        rc = solve(parametric, x, refs, u_prev=u_prev)
        warm.append(rw.iterations)
        cold.append(rc.iterations)
        U, u_prev = rw.u_star, rw.u_star[0]
        x = plant_step(x, u_prev, base, CFG.Ts)
    assert np.median(warm) <= np.median(cold)
