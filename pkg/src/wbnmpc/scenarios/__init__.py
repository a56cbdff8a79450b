"""Closed-loop simulation, metrics, experiment drivers and the CLI."""
from .bench import ClassReport, bench_rows, run_phase1_benchmarks
from .config import ConfigError, RunConfig, dumps_config, load_config
from .experiments import (MissingArtifact, aggregate, default_ode_library, load_tier_library, run_matrix,
                          run_pair)
from .metrics import (METRICS, RunMetrics, bootstrap_ci, compute_metrics, degradation, errors, mitigation,
                      window_rmse)
from .sim import (SHIFTS, TIERS, Scenario, SimulationError, Trace, build_ensemble_problem, initial_state,
                  run_closed_loop, shifted_params)
from .track import Track, circle_track, make_reference, stadium_track

__all__ = [
    "ClassReport", "bench_rows", "run_phase1_benchmarks", "ConfigError", "RunConfig", "dumps_config",
    "load_config", "MissingArtifact", "aggregate", "default_ode_library", "load_tier_library", "run_matrix",
    "run_pair", "METRICS", "RunMetrics", "bootstrap_ci", "compute_metrics", "degradation", "errors",
    "mitigation", "window_rmse", "SHIFTS", "TIERS", "Scenario", "SimulationError", "Trace",
    "build_ensemble_problem", "initial_state", "run_closed_loop", "shifted_params", "Track", "circle_track",
    "make_reference", "stadium_track",
]
