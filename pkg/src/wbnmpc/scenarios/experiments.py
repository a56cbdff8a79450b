"""Experiment drivers: library provisioning, paired runs and the outcome matrix."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..ocp import OcpConfig
from ..specialists.data import SPLIT_VAL, generate_dataset
from ..specialists.library import SpecialistLibrary, candidate_grid, select_library
from ..vehicle import VehicleParams, nominal_params
from .metrics import METRICS, bootstrap_ci, compute_metrics, mitigation, window_rmse
from .sim import Scenario, Trace, build_ensemble_problem, run_closed_loop
from .track import Track, stadium_track

log = logging.getLogger(__name__)

NEURAL_TIERS = {"pinn_adam": "adam_only", "pinn_hybrid": "hybrid"}


class MissingArtifact(FileNotFoundError):
    pass


def validation_states(base: VehicleParams | None = None, seed: int = 1):
    """Held-out nominal-regime (states, controls) used to score hull coverage."""
    d = generate_dataset(base or nominal_params(), 2000, 4, seed=seed)
    st, ct, _ = d.subset(SPLIT_VAL)
    return st, ct


def default_ode_library(base: VehicleParams | None = None, n: int = 8, seed: int = 1) -> SpecialistLibrary:
    """Greedy selection over the regime grid, nominal first, exact dynamics."""
    base = base or nominal_params()
    return select_library(candidate_grid(base), n, validation_states(base, seed), start=0)


def load_tier_library(tier: str, library_dir=None, base: VehicleParams | None = None, n: int = 8,
                      seed: int = 1) -> SpecialistLibrary:
    if tier in ("ideal_ode", "noisy_ode"):
        return default_ode_library(base, n, seed)
    if tier not in NEURAL_TIERS:
        raise ValueError(f"unknown tier {tier!r}")
    if library_dir is None:
        raise MissingArtifact(f"tier {tier} needs a trained library directory")
    path = Path(library_dir) / NEURAL_TIERS[tier]
    try:
        return SpecialistLibrary.load(path)
    except FileNotFoundError as exc:
        raise MissingArtifact(str(exc)) from exc


@dataclass
class PairResult:
    adaptive: Trace
    baseline: Trace


def run_pair(scenario: Scenario, lib, cfg: OcpConfig = OcpConfig(), track: Track | None = None,
             problem=None, base: VehicleParams | None = None) -> PairResult:
    """Adaptive run and its frozen twin (same seed, same everything else)."""
    track = track or stadium_track()
    problem = problem or build_ensemble_problem(lib, cfg)
    a = run_closed_loop(scenario, lib, cfg, track, problem, base)
    b = run_closed_loop(scenario.baseline(), lib, cfg, track, problem, base)
    return PairResult(a, b)


# per-process state for matrix workers
_WORKER = {}


def _worker_init(libs, cfg, track, base):
    _WORKER.clear()
    _WORKER.update(libs=libs, cfg=cfg, track=track, base=base, problems={})


def _run_cell(task):
    tier, scenario = task
    w = _WORKER
    prob = w["problems"].get(tier)
    if prob is None:
        prob = w["problems"][tier] = build_ensemble_problem(w["libs"][tier], w["cfg"])
    pair = run_pair(scenario, w["libs"][tier], w["cfg"], w["track"], prob, w["base"])
    v_ref = w["cfg"].v_ref
    out = {}
    for flag, tr in ((1, pair.adaptive), (0, pair.baseline)):
        pre, post = window_rmse(tr, scenario.shift_time, v_ref)
        out[flag] = (pre, post)
    return tier, scenario.shift, scenario.seed, out


def run_matrix(libs: dict, scenario: Scenario, seeds, tiers, shifts, cfg: OcpConfig = OcpConfig(),
               track: Track | None = None, base: VehicleParams | None = None, jobs: int = 1,
               progress=None) -> tuple[list[dict], list[dict]]:
    """Paired runs over tier x shift x seed.

    Returns (per-seed rows, aggregated rows).  Degradation is standardized
    to the ideal-ODE frozen run's pre-shift RMSE of the same seed when that
    tier is present, otherwise to each pair's own frozen run.
    """
    track = track or stadium_track()
    base = base or nominal_params()
    tasks = [(t, replace(scenario, tier=t, shift=s, seed=int(seed)))
             for t in tiers for s in shifts for seed in seeds]
    results = []
    if jobs > 1:
        with ProcessPoolExecutor(jobs, initializer=_worker_init, initargs=(libs, cfg, track, base)) as ex:
            for r in ex.map(_run_cell, tasks):
                results.append(r)
                if progress:
                    progress(r)
    else:
        _worker_init(libs, cfg, track, base)
        for task in tasks:
            r = _run_cell(task)
            results.append(r)
            if progress:
                progress(r)

    ref_pre = {(s, seed): out[0][0] for t, s, seed, out in results if t == "ideal_ode"}
    per_seed = []
    for t, s, seed, out in results:
        pre_base = ref_pre.get((s, seed), out[0][0])
        b_post = out[0][1]
        for flag in (1, 0):
            pre, post = out[flag]
            for k in METRICS:
                deg = 100.0 * (post[k] - pre_base[k]) / abs(pre_base[k])
                mit = mitigation(b_post[k], post[k], pre_base[k]) if flag else None
                per_seed.append(dict(tier=t, shift=s, adaptive=flag, seed=seed, metric=k, rmse_pre=pre[k],
                                     rmse_post=post[k], pre_base=pre_base[k], degradation_pct=deg,
                                     mitigation_pct=mit))
    return per_seed, aggregate(per_seed)


def aggregate(per_seed: list[dict]) -> list[dict]:
    """Median over seeds per (tier, shift, adaptive, metric) with bootstrap CIs."""
    keys = []
    for r in per_seed:
        key = (r["tier"], r["shift"], int(r["adaptive"]), r["metric"])
        if key not in keys:
            keys.append(key)
    rows = []
    for key in keys:
        grp = [r for r in per_seed if (r["tier"], r["shift"], int(r["adaptive"]), r["metric"]) == key]
        post = np.array([r["rmse_post"] for r in grp], dtype=float)
        lo, hi = bootstrap_ci(post)
        row = dict(tier=key[0], shift=key[1], adaptive=key[2], metric=key[3], n_seeds=len(grp),
                   rmse_pre=float(np.median([r["rmse_pre"] for r in grp])), rmse_post=float(np.median(post)),
                   rmse_post_ci_lo=lo, rmse_post_ci_hi=hi,
                   degradation_pct=float(np.median([r["degradation_pct"] for r in grp])), mitigation_pct=None,
                   mitigation_ci_lo=None, mitigation_ci_hi=None, mitigation_positive_frac=None)
        mits = [r["mitigation_pct"] for r in grp if r["mitigation_pct"] not in (None, "")]
        if key[2] == 1 and mits:
            m = np.array(mits, dtype=float)
            row["mitigation_pct"] = float(np.median(m))
            row["mitigation_ci_lo"], row["mitigation_ci_hi"] = bootstrap_ci(m)
            row["mitigation_positive_frac"] = float(np.mean(m > 0))
        rows.append(row)
    return rows


def pair_metrics(pair: PairResult, shift_time: float, v_ref: float, pre_base=None):
    return compute_metrics(pair.adaptive, shift_time, pair.baseline, pre_base=pre_base, v_ref=v_ref)
