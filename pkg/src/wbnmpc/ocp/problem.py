"""Tracking OCP: transcription, parameter updates and the SQP solver.

The prediction model is the forward-Euler map ``F(x, u) = x + Ts f(x, u)``.
Transcription builds ``F`` and its 6 x 8 symbolic Jacobian once, in the
model's own graph, and compiles two tapes: ``F`` alone (rollouts during the
line search) and ``F`` with every structurally nonzero Jacobian entry
(derivative evaluation).  The single-shooting rollout over the horizon and
its control sensitivities are then chained stage by stage.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..symgraph import ExprGraph, GraphStats, SparseJacobian, graph_stats, jacobian
from ..vehicle import N_CONTROL, N_STATE, PARAM_NAMES, VehicleParams, build_parametric_graph
from .qp import solve_qp

log = logging.getLogger(__name__)

NZ = N_STATE + N_CONTROL
KINDS = ("parametric", "ensemble", "baked")


@dataclass(frozen=True)
class OcpConfig:
    H: int = 15
    Ts: float = 0.02
    Q_p: float = 10.0
    P: float | None = None  # terminal position weight, Q_p when None
    R_delta: float = 1.0
    R_D: float = 0.1
    u_min: tuple = (-0.35, -0.1)
    u_max: tuple = (0.35, 1.0)
    ddelta_max: float = 0.05
    v_ref: float = 1.5
    max_iter: int = 50
    tol_step: float = 1e-8
    tol_kkt: float = 1e-6
    levenberg: float = 1e-8
    max_halvings: int = 20

    def __post_init__(self):
        if self.H < 1:
            raise ValueError("H must be >= 1")
        if not self.Ts > 0:
            raise ValueError("Ts must be positive")
        for name in ("Q_p", "R_delta", "R_D", "ddelta_max", "levenberg"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.P is not None and self.P < 0:
            raise ValueError("P must be non-negative")
        if len(self.u_min) != N_CONTROL or len(self.u_max) != N_CONTROL:
            raise ValueError("input bounds need one entry per control")
        if not all(lo < hi for lo, hi in zip(self.u_min, self.u_max)):
            raise ValueError("u_min must be below u_max componentwise")

    @property
    def P_term(self) -> float:
        return self.Q_p if self.P is None else self.P


@dataclass
class SolveReport:
    u_star: np.ndarray
    iterations: int
    converged: bool
    cost: float
    timing: dict
    constraint_violation: float
    kkt: float = math.nan
    initial_cost: float = math.nan


@dataclass
class OcpProblem:
    """Transcribed horizon problem; mutable only through ``params``."""

    model: ExprGraph
    config: OcpConfig
    kind: str
    stage_ids: list
    jac: SparseJacobian
    tape_F: object
    tape_FJ: object
    params: np.ndarray
    build_time: float
    last_u: np.ndarray | None = None
    _rows: np.ndarray = field(default=None, repr=False)
    _cols: np.ndarray = field(default=None, repr=False)

    @property
    def n_decision(self) -> int:
        return N_CONTROL * self.config.H

    def stage_stats(self) -> GraphStats:
        return graph_stats(self.model, list(self.stage_ids) + list(self.jac.node_ids))


# --- transcription ---------------------------------------------------------

def transcribe(model: ExprGraph, cfg: OcpConfig = OcpConfig(), kind: str | None = None) -> OcpProblem:
    """Append the Euler stage map and its Jacobian to ``model`` and compile.

    ``kind`` defaults to ``ensemble`` for models whose parameters are not
    the vehicle parameter vector, ``parametric`` for 15-slot models and
    ``baked`` for parameter-free ones.
    """
    t0 = time.perf_counter()
    if model.n_vars != NZ or len(model.outputs) != N_STATE:
        raise ValueError(f"model must have {NZ} variables and {N_STATE} outputs")
    if kind is None:
        kind = ("baked" if model.n_params == 0 else
                "parametric" if model.n_params == len(PARAM_NAMES) else "ensemble")
    if kind not in KINDS:
        raise ValueError(f"unknown problem kind {kind!r}")
    g = model
    ts = g.const(cfg.Ts)
    F = [g.add(g.var(i), g.mul(ts, f)) for i, f in enumerate(model.outputs)]
    J = jacobian(g, F, list(range(NZ)))
    tape_F = g.compile(F)
    tape_FJ = g.compile(F + [e[2] for e in J.entries])
    build = time.perf_counter() - t0
    prob = OcpProblem(model=g, config=cfg, kind=kind, stage_ids=F, jac=J,
                      tape_F=tape_F, tape_FJ=tape_FJ, params=np.zeros(g.n_params),
                      build_time=build)
    prob._rows = np.array([e[0] for e in J.entries], dtype=np.int64)
    prob._cols = np.array([e[1] for e in J.entries], dtype=np.int64)
    if kind == "ensemble":
        prob.params[:] = 1.0 / g.n_params
    return prob


def build_parametric_problem(p: VehicleParams, cfg: OcpConfig = OcpConfig()) -> OcpProblem:
    """Physics (parametric) baseline; returns with ``p`` written in."""
    t0 = time.perf_counter()
    prob = transcribe(build_parametric_graph(), cfg, "parametric")
    prob.build_time = time.perf_counter() - t0
    update_params(prob, p)
    return prob


def rebuild_jit_baseline(p: VehicleParams, cfg: OcpConfig = OcpConfig()) -> tuple[OcpProblem, float]:
    """Full re-transcription with ``p`` baked in as constants."""
    t0 = time.perf_counter()
    prob = transcribe(build_parametric_graph(baked=p), cfg, "baked")
    latency = time.perf_counter() - t0
    prob.build_time = latency
    return prob, latency


# --- parameter block ---------------------------------------------------------

def update_weights(problem: OcpProblem, w) -> None:
    if problem.kind != "ensemble":
        raise ValueError("weights apply to ensemble problems only")
    w = np.asarray(w, dtype=np.float64)
    if w.shape != problem.params.shape:
        raise ValueError(f"expected {len(problem.params)} weights")
    if not np.all(np.isfinite(w)) or w.min() < -1e-6 or abs(w.sum() - 1.0) > 1e-6:
        raise ValueError("weights are not on the simplex")
    problem.params[:] = w


def update_params(problem: OcpProblem, p) -> None:
    if problem.kind != "parametric":
        raise ValueError("vehicle parameters apply to parametric problems only")
    if isinstance(p, VehicleParams):
        vec = p.as_vector()
    else:
        vec = VehicleParams.from_vector(p).as_vector()
    problem.params[:] = vec


# --- rollouts and sensitivities ------------------------------------------------

def _stage_input(x, u):
    z = np.empty(NZ)
    z[:N_STATE] = x
    z[N_STATE:] = u
    return z


def rollout(problem: OcpProblem, x0, U) -> np.ndarray:
    """States x_0..x_H under controls ``U`` (H x 2)."""
    H = problem.config.H
    xs = np.empty((H + 1, N_STATE))
    xs[0] = x0
    work = np.empty(len(problem.tape_F))
    for k in range(H):
        xs[k + 1] = problem.tape_F.eval(_stage_input(xs[k], U[k]), problem.params, work)
    return xs


def rollout_with_jacobians(problem: OcpProblem, x0, U):
    """States plus stage Jacobians A_k = dF/dx, B_k = dF/du."""
    H = problem.config.H
    xs = np.empty((H + 1, N_STATE))
    Js = np.zeros((H, N_STATE, NZ))
    xs[0] = x0
    work = np.empty(len(problem.tape_FJ))
    rows, cols = problem._rows, problem._cols
    for k in range(H):
        out = problem.tape_FJ.eval(_stage_input(xs[k], U[k]), problem.params, work)
        xs[k + 1] = out[:N_STATE]
        Js[k, rows, cols] = out[N_STATE:]
    return xs, Js[:, :, :N_STATE], Js[:, :, N_STATE:]


def _weights(cfg: OcpConfig):
    return (math.sqrt(cfg.Q_p), math.sqrt(cfg.P_term),
            np.array([math.sqrt(cfg.R_delta), math.sqrt(cfg.R_D)]))


def residuals(cfg: OcpConfig, xs, U, refs, u_prev) -> np.ndarray:
    """Stacked least-squares residual; the cost is its squared norm."""
    sq, sp, sr = _weights(cfg)
    pos = sq * (xs[1:, 0:2] - refs)
    term = sp * (xs[-1, 0:2] - refs[-1])
    dU = np.diff(np.vstack([u_prev, U]), axis=0)
    return np.concatenate([pos.ravel(), term, (dU * sr).ravel()])


def cost(problem: OcpProblem, x0, U, refs, u_prev) -> float:
    xs = rollout(problem, x0, U)
    r = residuals(problem.config, xs, U, refs, u_prev)
    return float(r @ r)


def residual_jacobian(cfg: OcpConfig, A, B) -> np.ndarray:
    """d residual / d U for the flattened control vector (2H columns)."""
    H = cfg.H
    n = N_CONTROL * H
    sq, sp, sr = _weights(cfg)
    S = np.zeros((N_STATE, n))
    Jr = np.zeros((2 * H + 2 + n, n))
    for k in range(H):
        S = A[k] @ S
        S[:, 2 * k:2 * k + 2] += B[k]
        Jr[2 * k:2 * k + 2] = sq * S[0:2]
    Jr[2 * H:2 * H + 2] = sp * S[0:2]
    D = np.eye(n)
    D[np.arange(2, n), np.arange(0, n - 2)] = -1.0
    Jr[2 * H + 2:] = np.tile(sr, H)[:, None] * D
    return Jr


def cost_gradient(problem: OcpProblem, x0, U, refs, u_prev) -> np.ndarray:
    """Exact gradient of :func:`cost` with respect to the flattened controls."""
    xs, A, B = rollout_with_jacobians(problem, x0, U)
    r = residuals(problem.config, xs, U, refs, u_prev)
    return 2.0 * residual_jacobian(problem.config, A, B).T @ r


# --- constraints ---------------------------------------------------------------

def _constraint_matrix(cfg: OcpConfig):
    """``A v <= b0`` for the flattened controls, excluding the first rate row
    which depends on the previously applied input."""
    H = cfg.H
    n = N_CONTROL * H
    I = np.eye(n)
    R = np.zeros((H, n))
    for k in range(H):
        R[k, 2 * k] = 1.0
        if k > 0:
            R[k, 2 * (k - 1)] = -1.0
    return np.vstack([I, -I, R, -R])


def constraint_rhs(cfg: OcpConfig, u_prev) -> np.ndarray:
    H = cfg.H
    umax = np.tile(cfg.u_max, H)
    umin = np.tile(cfg.u_min, H)
    rate = np.full(H, cfg.ddelta_max)
    hi = rate.copy()
    lo = rate.copy()
    hi[0] += u_prev[0]
    lo[0] -= u_prev[0]
    return np.concatenate([umax, -umin, hi, lo])


def constraint_violation(cfg: OcpConfig, U, u_prev) -> float:
    v = np.asarray(U, dtype=np.float64).ravel()
    r = _constraint_matrix(cfg) @ v - constraint_rhs(cfg, np.asarray(u_prev, dtype=np.float64))
    return float(max(r.max(), 0.0))


def project_feasible(cfg: OcpConfig, U, u_prev) -> np.ndarray:
    """Sequential clipping onto the box and steering-rate limits."""
    U = np.array(U, dtype=np.float64)
    lo, hi = np.asarray(cfg.u_min), np.asarray(cfg.u_max)
    prev = float(np.clip(u_prev[0], lo[0], hi[0]))
    for k in range(len(U)):
        U[k] = np.clip(U[k], lo, hi)
        d = np.clip(U[k, 0], prev - cfg.ddelta_max, prev + cfg.ddelta_max)
        U[k, 0] = min(max(d, lo[0]), hi[0])
        prev = U[k, 0]
    return U


def shift_warm_start(U) -> np.ndarray:
    """Drop the applied input and repeat the last one."""
    U = np.asarray(U, dtype=np.float64)
    return np.vstack([U[1:], U[-1:]])


# --- SQP ---------------------------------------------------------------------

def solve(problem: OcpProblem, x0, refs, w=None, warm_start=None, u_prev=None,
          shift: bool = True, clock=time.perf_counter) -> SolveReport:
    """Gauss-Newton SQP with box and steering-rate constraints.

    ``warm_start`` is the previous solution; it is shifted by one step
    unless ``shift`` is false.  ``u_prev`` is the input applied before
    ``u_0`` (defaults to the first row of ``warm_start``, else zero).
    """
    cfg = problem.config
    H = cfg.H
    refs = np.asarray(refs, dtype=np.float64).reshape(H, 2)
    x0 = np.asarray(x0, dtype=np.float64)
    if problem.kind == "ensemble":
        if w is None:
            raise ValueError("ensemble problems need governance weights")
        update_weights(problem, w)
    elif w is not None:
        raise ValueError("weights given for a non-ensemble problem")
    if u_prev is None:
        u_prev = np.asarray(warm_start, dtype=np.float64)[0] if warm_start is not None else np.zeros(N_CONTROL)
    u_prev = np.asarray(u_prev, dtype=np.float64)

    t_start = clock()
    t_der = t_lin = t_ls = 0.0
    if warm_start is None:
        U = np.zeros((H, N_CONTROL))
    else:
        U = shift_warm_start(warm_start) if shift else np.array(warm_start, dtype=np.float64)
    U = project_feasible(cfg, U, u_prev)
    Acon = _constraint_matrix(cfg)
    bcon = constraint_rhs(cfg, u_prev)
    n = N_CONTROL * H
    lam = cfg.levenberg
    converged = False
    f = math.nan
    f0 = math.nan
    kkt = math.nan
    it = 0
    for it in range(1, cfg.max_iter + 1):
        t0 = clock()
        try:
            xs, A, B = rollout_with_jacobians(problem, x0, U)
        except (ValueError, FloatingPointError) as exc:
            log.warning("derivative evaluation failed: %s", exc)
            break
        r = residuals(cfg, xs, U, refs, u_prev)
        Jr = residual_jacobian(cfg, A, B)
        f = float(r @ r)
        if it == 1:
            f0 = f
        grad = 2.0 * Jr.T @ r
        t1 = clock()
        t_der += t1 - t0
        if not math.isfinite(f):
            break
        v = U.ravel()
        G = 2.0 * Jr.T @ Jr
        G[np.diag_indices(n)] += lam
        slack = np.maximum(bcon - Acon @ v, 0.0)
        qp = solve_qp(G, grad, Acon, slack)
        d = qp.x
        kkt = float(np.max(np.abs(G @ d)))
        t2 = clock()
        t_lin += t2 - t1
        if kkt < cfg.tol_kkt or np.max(np.abs(d)) < cfg.tol_step:
            converged = True
            break
        slope = float(grad @ d)
        alpha = 1.0
        accepted = False
        for _ in range(cfg.max_halvings):
            Ut = (v + alpha * d).reshape(H, N_CONTROL)
            try:
                ft = cost(problem, x0, Ut, refs, u_prev)
            except (ValueError, FloatingPointError):
                ft = math.inf
            if math.isfinite(ft) and ft <= f + 1e-4 * alpha * min(slope, 0.0) and ft <= f:
                accepted = True
                break
            alpha *= 0.5
        t_ls += clock() - t2
        if not accepted:
            # Levenberg increase on a rejected step
            lam = max(lam * 100.0, 1e-6)
            if lam > 1e6:
                break
            continue
        lam = max(cfg.levenberg, lam * 0.1)
        U = Ut
        f = ft
        if alpha * np.max(np.abs(d)) < cfg.tol_step:
            converged = True
            break
    total = clock() - t_start
    if not math.isfinite(f):
        f = cost(problem, x0, U, refs, u_prev) if np.all(np.isfinite(U)) else math.inf
    problem.last_u = U.copy()
    return SolveReport(
        u_star=U, iterations=it, converged=converged, cost=f,
        timing=dict(total=total, derivative_eval=t_der, linear_solve=t_lin, line_search=t_ls),
        constraint_violation=constraint_violation(cfg, U, u_prev), kkt=kkt, initial_cost=f0,
    )


# --- NLP sparsity ------------------------------------------------------------

def nlp_jacobian_pattern(problem: OcpProblem) -> tuple[int, int, int]:
    """Constraint-Jacobian pattern of the equivalent multiple-shooting NLP.

    Decision vector (x_0..x_H, u_0..u_{H-1}); constraints x_0 = x̂ and
    x_{k+1} = F(x_k, u_k).  Returns ``(rows, cols, nnz)``.
    """
    H = problem.config.H
    rows = N_STATE * (H + 1)
    cols = N_STATE * (H + 1) + N_CONTROL * H
    nnz = N_STATE + H * (N_STATE + problem.jac.nnz)
    return rows, cols, nnz


def nlp_jacobian_density(problem: OcpProblem) -> float:
    rows, cols, nnz = nlp_jacobian_pattern(problem)
    return nnz / (rows * cols)
