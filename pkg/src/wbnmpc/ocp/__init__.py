"""Horizon-H tracking OCP over symbolic dynamics, solved by Gauss-Newton SQP."""
from .problem import (
    OcpConfig, OcpProblem, SolveReport, build_parametric_problem, cost, cost_gradient,
    nlp_jacobian_density, nlp_jacobian_pattern, rebuild_jit_baseline, rollout, shift_warm_start,
    solve, transcribe, update_params, update_weights,
)
from .qp import QpResult, solve_qp

__all__ = [
    "OcpConfig", "OcpProblem", "QpResult", "SolveReport", "build_parametric_problem", "cost",
    "cost_gradient", "nlp_jacobian_density", "nlp_jacobian_pattern", "rebuild_jit_baseline",
    "rollout", "shift_warm_start", "solve", "solve_qp", "transcribe", "update_params",
    "update_weights",
]
