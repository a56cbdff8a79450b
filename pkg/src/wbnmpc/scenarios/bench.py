"""Phase I benchmarks: solve-time decomposition and adaptation latency."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..governor import GovernorState, governor_step
from ..ocp import (OcpConfig, build_parametric_problem, nlp_jacobian_density, rebuild_jit_baseline, solve,
                   update_params)
from ..vehicle import VehicleParams, nominal_params, plant_step
from .metrics import bootstrap_ci
from .sim import build_ensemble_problem, initial_state, shifted_params
from .track import Track, make_reference, stadium_track

TIMING_KEYS = ("total", "derivative_eval", "linear_solve", "line_search")


@dataclass
class ClassReport:
    """Per model class: build time, solve statistics, adaptation latency."""

    name: str
    build_time: float
    node_count: int
    density: float
    solves: dict  # key -> per-solve seconds
    iterations: np.ndarray
    adaptation: dict = field(default_factory=dict)  # label -> latencies (s)

    def median(self, key="total") -> float:
        return float(np.median(self.solves[key]))

    def p95(self, key="total") -> float:
        return float(np.percentile(self.solves[key], 95))

    def share(self, key) -> float:
        return float(np.sum(self.solves[key]) / np.sum(self.solves["total"]))


def _loop(problem, track: Track, cfg: OcpConfig, n: int, base: VehicleParams, shifted: VehicleParams,
          lib=None, on_shift=None, seed: int = 0):
    """Warm-started closed loop; the plant shifts halfway through.

    Returns per-solve timings, iteration counts and governor latencies.
    """
    x = initial_state(track, seed, cfg.v_ref)
    k_shift = n // 2
    timings = {k: [] for k in TIMING_KEYS}
    its, gov_lat, shift_lat = [], [], []
    gov = None
    if lib is not None:
        w0 = np.zeros(len(lib))
        w0[0] = 1.0
        gov = GovernorState.initial(w0, 0.1, 20, cfg.Ts)
    U = y_prev = u_prev = None
    for k in range(n):
        if k == k_shift and on_shift is not None:
            shift_lat.append(on_shift())
        y = x.copy()
        w = None
        if gov is not None:
            if y_prev is not None:
                gov, lat = governor_step(gov, y, y_prev, u_prev, lib)
                gov_lat.append(lat)
            w = gov.w_smooth.copy()
        refs = make_reference(track, y, cfg)
        rep = solve(problem, y, refs, w=w, warm_start=U,
                    u_prev=u_prev if u_prev is not None else np.zeros(2))
        for key in TIMING_KEYS:
            timings[key].append(rep.timing[key])
        its.append(rep.iterations)
        u = rep.u_star[0]
        x = plant_step(x, u, shifted if k >= k_shift else base, cfg.Ts)
        y_prev, u_prev, U = y, u, rep.u_star
    return {k: np.array(v) for k, v in timings.items()}, np.array(its), np.array(gov_lat), shift_lat


def run_phase1_benchmarks(lib, cfg: OcpConfig = OcpConfig(), n_solves: int = 100,
                          base: VehicleParams | None = None, track: Track | None = None,
                          jit_repeats: int = 5, seed: int = 0) -> dict[str, ClassReport]:
    """Parametric physics vs ensemble over ``lib`` under a friction-up shift.

    Adaptation latencies: explicit parameter write and JIT rebuild for the
    parametric class, Governor reweighting for the ensemble.
    """
    base = base or nominal_params()
    track = track or stadium_track()
    shifted = shifted_params(base, "benchmark_friction_up")

    t0 = time.perf_counter()
    par = build_parametric_problem(base, cfg)
    par_build = time.perf_counter() - t0

    def explicit_update():
        t = time.perf_counter()
        update_params(par, shifted)
        return time.perf_counter() - t

    p_t, p_it, _, p_shift = _loop(par, track, cfg, n_solves, base, shifted, on_shift=explicit_update, seed=seed)
    jit = [rebuild_jit_baseline(shifted, cfg)[1] for _ in range(jit_repeats)]
    par_rep = ClassReport("parametric", par_build, par.stage_stats().node_count, nlp_jacobian_density(par),
                          p_t, p_it, {"explicit_update": np.array(p_shift), "jit_rebuild": np.array(jit)})

    ens = build_ensemble_problem(lib, cfg)
    e_t, e_it, gov_lat, _ = _loop(ens, track, cfg, n_solves, base, shifted, lib=lib, seed=seed)
    ens_rep = ClassReport("ensemble", ens.build_time, ens.stage_stats().node_count, nlp_jacobian_density(ens),
                          e_t, e_it, {"governor": gov_lat})
    return {"parametric": par_rep, "ensemble": ens_rep}


def bench_rows(reports: dict[str, ClassReport]) -> list[dict]:
    """Flat rows for ``bench.csv`` (times in milliseconds)."""
    par = reports["parametric"]
    rows = []
    for name, r in reports.items():
        lo, hi = bootstrap_ci(r.solves["total"])
        row = dict(
            model=name, build_ms=1e3 * r.build_time, node_count=r.node_count, density_pct=100 * r.density,
            solve_median_ms=1e3 * r.median(), solve_ci_lo_ms=1e3 * lo, solve_ci_hi_ms=1e3 * hi,
            solve_p95_ms=1e3 * r.p95(), ratio_vs_parametric=r.median() / par.median(),
            derivative_share=r.share("derivative_eval"), linear_share=r.share("linear_solve"),
            line_search_share=r.share("line_search"), median_iterations=float(np.median(r.iterations)),
            n_solves=len(r.solves["total"]),
        )
        for label, lat in r.adaptation.items():
            row[f"{label}_median_ms"] = 1e3 * float(np.median(lat))
            row[f"{label}_p95_ms"] = 1e3 * float(np.percentile(lat, 95))
        rows.append(row)
    return rows
