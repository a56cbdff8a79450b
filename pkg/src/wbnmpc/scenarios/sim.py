"""Synchronous closed-loop simulation.

Virtual time advances by exactly ``Ts`` per control step no matter how long
the Governor and the NMPC take, so a run is a pure function of
(scenario, seed, configuration).  Wall-clock timings are collected on the
side and never feed back into the trajectory.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..governor import GovernorState, governor_step
from ..ocp import OcpConfig, OcpProblem, solve, transcribe
from ..specialists.embed import build_ensemble
from ..specialists.library import SpecialistLibrary
from ..vehicle import VehicleParams, make_regime, nominal_params, plant_step
from .track import Track, make_reference, stadium_track

log = logging.getLogger(__name__)

TIERS = ("ideal_ode", "noisy_ode", "pinn_adam", "pinn_hybrid")
SHIFTS = ("none", "friction_only", "all_params", "benchmark_friction_up")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Scenario:
    tier: str = "ideal_ode"
    shift: str = "friction_only"
    shift_time: float = 10.0
    duration: float = 20.0
    adaptive: bool = True
    seed: int = 0
    sigma: float = 0.05  # measurement noise std, noisy_ode tier only
    window: int = 20
    alpha: float = 0.1
    substeps: int = 10
    start_offset: float = 0.05  # max initial lateral offset, m

    def __post_init__(self):
        if self.tier not in TIERS:
            raise ValueError(f"unknown tier {self.tier!r}")
        if self.shift not in SHIFTS:
            raise ValueError(f"unknown shift {self.shift!r}")
        if not self.shift_time < self.duration:
            raise ValueError("shift_time must precede the end of the run")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    def baseline(self) -> "Scenario":
        """Paired run differing only in the adaptive flag."""
        return replace(self, adaptive=False)


def shifted_params(base: VehicleParams, shift: str) -> VehicleParams:
    if shift == "none":
        return base
    if shift == "friction_only":
        return make_regime(base, mu_scale=0.5 * base.mu_scale)
    if shift == "all_params":
        return make_regime(base, mu_scale=0.5 * base.mu_scale, mass_factor=1.2, drag_factor=1.4)
    if shift == "benchmark_friction_up":
        return make_regime(base, mu_scale=1.25 * base.mu_scale)
    raise ValueError(f"unknown shift {shift!r}")


def initial_state(track: Track, seed: int, v0: float, max_offset: float = 0.05) -> np.ndarray:
    """Seeded start: random arclength, small lateral offset, tangent heading."""
    rng = np.random.default_rng([seed, 0])
    s0 = rng.uniform(0.0, track.length)
    off = rng.uniform(-max_offset, max_offset)
    p = track.point_at(s0)
    th = float(track.heading_at(s0))
    p = p + off * np.array([-math.sin(th), math.cos(th)])
    return np.array([p[0], p[1], th, v0, 0.0, 0.0])


@dataclass
class Trace:
    """Per-step log; ``timing`` holds wall-clock data only."""

    t: np.ndarray
    x: np.ndarray  # true plant state at t
    y: np.ndarray  # measured state at t
    u: np.ndarray  # applied input on [t, t + Ts)
    ref: np.ndarray  # first and last reference point (n, 4)
    w: np.ndarray  # weights used by the NMPC at t
    cost: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    cte: np.ndarray  # cross-track error of the true position
    timing: dict = field(default_factory=dict)
    names: list = field(default_factory=list)


def build_ensemble_problem(lib: SpecialistLibrary, cfg: OcpConfig = OcpConfig()) -> OcpProblem:
    """Ensemble graph plus transcription; build_time covers both."""
    t0 = time.perf_counter()
    prob = transcribe(build_ensemble(lib), cfg, "ensemble")
    prob.build_time = time.perf_counter() - t0
    return prob


def run_closed_loop(scenario: Scenario, lib: SpecialistLibrary, cfg: OcpConfig = OcpConfig(),
                    track: Track | None = None, problem: OcpProblem | None = None,
                    base: VehicleParams | None = None, nominal_index: int = 0) -> Trace:
    """Simulate one scenario with the ensemble NMPC over ``lib``.

    The non-adaptive controller keeps the weights on the nominal vertex;
    the adaptive one starts there and follows the Governor's smoothed
    weights.
    """
    track = track or stadium_track()
    base = base or nominal_params()
    problem = problem or build_ensemble_problem(lib, cfg)
    if problem.kind != "ensemble" or len(problem.params) != len(lib):
        raise ValueError("problem does not match the library")
    n_lib = len(lib)
    w_nom = np.zeros(n_lib)
    w_nom[nominal_index] = 1.0
    gov = GovernorState.initial(w_nom, scenario.alpha, scenario.window, cfg.Ts)
    shifted = shifted_params(base, scenario.shift)
    k_shift = int(round(scenario.shift_time / cfg.Ts))
    n = int(round(scenario.duration / cfg.Ts))
    noise = np.random.default_rng([scenario.seed, 1])
    sigma = scenario.sigma if scenario.tier == "noisy_ode" else 0.0

    cols = {k: [] for k in ("x", "y", "u", "ref", "w", "cost", "it", "conv", "cte")}
    timing = {k: np.full(n, np.nan) for k in
              ("governor", "solve_total", "derivative_eval", "linear_solve", "line_search")}
    x = initial_state(track, scenario.seed, cfg.v_ref, scenario.start_offset)
    y_prev = u_prev = U = None
    for k in range(n):
        y = x.copy()
        if sigma > 0:
            y[3:6] += noise.normal(0.0, sigma, 3)
        if scenario.adaptive and y_prev is not None:
            gov, lat = governor_step(gov, y, y_prev, u_prev, lib)
            timing["governor"][k] = lat
        w = gov.w_smooth.copy() if scenario.adaptive else w_nom
        refs = make_reference(track, y, cfg)
        rep = solve(problem, y, refs, w=w, warm_start=U,
                    u_prev=u_prev if u_prev is not None else np.zeros(2))
        if not np.all(np.isfinite(rep.u_star)):
            raise SimulationError(f"solver returned non-finite inputs at step {k}")
        if not rep.converged:
            log.debug("step %d: solver not converged (kkt %.2e), applying best iterate", k, rep.kkt)
        u = rep.u_star[0].copy()
        for key in ("derivative_eval", "linear_solve", "line_search"):
            timing[key][k] = rep.timing[key]
        timing["solve_total"][k] = rep.timing["total"]
        cols["x"].append(x)
        cols["y"].append(y)
        cols["u"].append(u)
        cols["ref"].append(np.concatenate([refs[0], refs[-1]]))
        cols["w"].append(w)
        cols["cost"].append(rep.cost)
        cols["it"].append(rep.iterations)
        cols["conv"].append(rep.converged)
        cols["cte"].append(track.cross_track_error(x))
        p_plant = shifted if k >= k_shift else base
        x = plant_step(x, u, p_plant, cfg.Ts, scenario.substeps)
        if not np.all(np.isfinite(x)):
            raise SimulationError(f"plant state became non-finite at t={(k + 1) * cfg.Ts:.2f}s")
        y_prev, u_prev, U = y, u, rep.u_star
    return Trace(
        t=np.arange(n) * cfg.Ts, x=np.array(cols["x"]), y=np.array(cols["y"]),
        u=np.array(cols["u"]), ref=np.array(cols["ref"]), w=np.array(cols["w"]),
        cost=np.array(cols["cost"]), iterations=np.array(cols["it"]),
        converged=np.array(cols["conv"]), cte=np.array(cols["cte"]),
        timing=timing, names=list(lib.names),
    )
