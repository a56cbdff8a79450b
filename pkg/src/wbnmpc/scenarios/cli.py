"""Command-line entry point: ``wbnmpc <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error (argparse usage errors too),
3 solver or simulation hard failure, 4 missing artifacts.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from ..specialists.library import train_library
from ..vehicle import dump_params
from . import io
from .bench import bench_rows, run_phase1_benchmarks
from .config import ConfigError, RunConfig, dumps_config, load_config
from .metrics import compute_metrics
from .experiments import (MissingArtifact, default_ode_library, load_tier_library, pair_metrics, run_matrix,
                          run_pair)
from .sim import SimulationError, run_closed_loop
from .track import stadium_track

log = logging.getLogger("wbnmpc")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_MISSING = 0, 2, 3, 4


def _common(p: argparse.ArgumentParser, out=True):
    p.add_argument("-c", "--config", help="run configuration file (INI)")
    p.add_argument("-s", "--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one configuration value (repeatable)")
    if out:
        p.add_argument("-o", "--out", help="run directory (default: paths.out)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wbnmpc", description="Adaptive ensemble NMPC experiments")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("train", help="train the neural specialist library")
    _common(p, out=False)
    p.add_argument("--library", help="output library directory (default: paths.library)")

    p = sub.add_parser("select", help="greedy regime selection over the candidate grid")
    _common(p)

    p = sub.add_parser("run", help="one scenario with its paired frozen baseline")
    _common(p)
    p.add_argument("--tier")
    p.add_argument("--shift")
    p.add_argument("--seed", type=int)
    p.add_argument("--no-baseline", action="store_true", help="skip the paired frozen run")
    p.add_argument("--frozen", action="store_true", help="run with the Governor disabled")

    p = sub.add_parser("matrix", help="tier x shift grid over seeds with paired baselines")
    _common(p)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = sub.add_parser("bench", help="solver cost and adaptation latency benchmark")
    _common(p)
    p.add_argument("--ideal-ode", action="store_true",
                   help="benchmark exact-ODE specialists (no trained library needed)")
    p.add_argument("--solves", type=int, help="warm-started solves per model class")

    p = sub.add_parser("report", help="aggregate CSVs of run directories into summary tables")
    p.add_argument("dirs", nargs="+", help="run directories holding bench.csv and/or metrics.csv")
    p.add_argument("-o", "--out", help="where to write summary.md (default: first directory)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def _prepare(args) -> tuple[RunConfig, Path | None]:
    cfg = load_config(args.config, args.set)
    out = None
    if hasattr(args, "out"):
        out = Path(args.out or cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(dumps_config(cfg))
    return cfg, out


def _track(cfg: RunConfig):
    return stadium_track(**cfg.track)


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set)
    lib_dir = Path(args.library or cfg.library)
    sel = default_ode_library(cfg.vehicle, cfg.n_specialists, cfg.select_seed)
    t0 = time.perf_counter()
    rows = []

    def progress(i, name, pair):
        log.info("%d %s adam %.3e hybrid %.3e (%.0fs)", i, name, pair["adam_only"].heldout_rmse,
                 pair["hybrid"].heldout_rmse, time.perf_counter() - t0)
        rows.append(dict(index=i, name=name, adam_only_rmse=pair["adam_only"].heldout_rmse,
                         hybrid_rmse=pair["hybrid"].heldout_rmse, elapsed_s=time.perf_counter() - t0))

    libs = train_library(sel.regimes, sel.names, cfg.n_uniform, cfg.n_chirp, cfg.train_seed, cfg.train, progress)
    for k, lib in libs.items():
        lib.save(lib_dir / k)
    lib_dir.mkdir(parents=True, exist_ok=True)
    (lib_dir / "config.ini").write_text(dumps_config(cfg))
    io.write_csv(lib_dir / "training.csv", rows)
    print(f"library written to {lib_dir}")
    return EXIT_OK


def cmd_select(args) -> int:
    cfg, out = _prepare(args)
    lib = default_ode_library(cfg.vehicle, cfg.n_specialists, cfg.select_seed)
    rows = []
    for rank, (idx, name, p) in enumerate(zip(lib.indices, lib.names, lib.regimes)):
        rows.append(dict(rank=rank, candidate=idx, name=name, mu_scale=p.mu_scale,
                         mass_factor=p.m / cfg.vehicle.m, drag_factor=p.Cd / cfg.vehicle.Cd))
        dump_params(p, out / f"regime_{rank:02d}_{name}.txt")
    io.write_csv(out / "selection.csv", rows)
    for r in rows:
        print(f"{r['rank']:2d} {r['name']}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg, out = _prepare(args)
    over = {}
    if args.tier:
        over["tier"] = args.tier
    if args.shift:
        over["shift"] = args.shift
    if args.seed is not None:
        over["seed"] = args.seed
    if args.frozen:
        over["adaptive"] = False
    try:
        sc = cfg.scenario(**over)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    lib = load_tier_library(sc.tier, cfg.library, cfg.vehicle, cfg.n_specialists, cfg.select_seed)
    track = _track(cfg)
    if args.no_baseline or not sc.adaptive:
        tr = run_closed_loop(sc, lib, cfg.ocp, track, base=cfg.vehicle)
        io.write_trace(out, tr)
        m = compute_metrics(tr, sc.shift_time, v_ref=cfg.ocp.v_ref)
    else:
        pair = run_pair(sc, lib, cfg.ocp, track, base=cfg.vehicle)
        io.write_trace(out, pair.adaptive)
        io.write_trace(out / "baseline", pair.baseline)
        m = pair_metrics(pair, sc.shift_time, cfg.ocp.v_ref)
    labels = dict(tier=sc.tier, shift=sc.shift, adaptive=int(sc.adaptive), seed=sc.seed)
    io.write_csv(out / "metrics.csv", io.metrics_rows(m, **labels))
    for r in io.metrics_rows(m):
        mit = "" if r["mitigation_pct"] is None else f"  mitigation {r['mitigation_pct']:+.1f}%"
        print(f"{r['metric']:>3}: pre {r['rmse_pre']:.4f} post {r['rmse_post']:.4f} "
              f"degradation {r['degradation_pct']:+.1f}%{mit}")
    print(f"outputs in {out}")
    return EXIT_OK


def cmd_matrix(args) -> int:
    cfg, out = _prepare(args)
    libs = {t: load_tier_library(t, cfg.library, cfg.vehicle, cfg.n_specialists, cfg.select_seed)
            for t in cfg.tiers}
    sc = cfg.scenario()

    def progress(r):
        log.info("done %s %s seed %d", r[0], r[1], r[2])

    per_seed, agg = run_matrix(libs, sc, cfg.seeds, cfg.tiers, cfg.shifts, cfg.ocp, _track(cfg), cfg.vehicle,
                               args.jobs, progress)
    io.write_csv(out / "metrics_per_seed.csv", per_seed)
    io.write_csv(out / "metrics.csv", agg)
    (out / "summary.md").write_text(io.summary_markdown(matrix=agg))
    print(f"{len(agg)} cells written to {out / 'metrics.csv'}")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg, out = _prepare(args)
    if args.ideal_ode:
        lib = default_ode_library(cfg.vehicle, cfg.n_specialists, cfg.select_seed)
    else:
        lib = load_tier_library("pinn_hybrid", cfg.library)
    n = args.solves or cfg.n_bench_solves
    reports = run_phase1_benchmarks(lib, cfg.ocp, n, cfg.vehicle, _track(cfg), seed=cfg.seed)
    rows = bench_rows(reports)
    io.write_csv(out / "bench.csv", rows)
    (out / "summary.md").write_text(io.summary_markdown(bench=rows))
    for r in rows:
        print(f"{r['model']:>10}: solve median {r['solve_median_ms']:.3f} ms "
              f"(x{r['ratio_vs_parametric']:.1f}), derivative share {r['derivative_share']:.2f}")
    return EXIT_OK


def cmd_report(args) -> int:
    dirs = [Path(d) for d in args.dirs]
    bench, matrix = [], []
    for d in dirs:
        if not d.is_dir():
            raise MissingArtifact(f"run directory not found: {d}")
        if (d / "bench.csv").exists():
            bench += io.read_csv(d / "bench.csv")
        if (d / "metrics.csv").exists():
            rows = io.read_csv(d / "metrics.csv")
            if rows and "rmse_post_ci_lo" in rows[0]:
                matrix += rows
    if not bench and not matrix:
        raise MissingArtifact(f"no bench.csv or matrix metrics.csv in {', '.join(map(str, dirs))}")
    out = Path(args.out) if args.out else dirs[0]
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.md").write_text(io.summary_markdown(bench, matrix))
    if matrix:
        plot = [dict(tier=r["tier"], shift=r["shift"], adaptive=int(r["adaptive"]), median=r["rmse_post"],
                     lo=r["rmse_post_ci_lo"], hi=r["rmse_post_ci_hi"]) for r in matrix if r["metric"] == "pos"]
        io.write_csv(out / "plot_position_rmse.csv", plot)
    print(f"summary written to {out / 'summary.md'}")
    return EXIT_OK


COMMANDS = dict(train=cmd_train, select=cmd_select, run=cmd_run, matrix=cmd_matrix, bench=cmd_bench,
                report=cmd_report)


def cli_main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except np.linalg.LinAlgError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main() -> None:
    sys.exit(cli_main())
