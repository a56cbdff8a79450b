"""CSV and markdown writers.

Floats are written with ``repr`` so a rerun of a seeded scenario produces
byte-identical files.  Wall-clock data goes to separate files
(``timing.csv``, ``bench.csv``) because it can never be reproducible.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from ..vehicle import CONTROL_NAMES, STATE_NAMES


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    return "" if v is None else str(v)


def write_csv(path, rows: list[dict], columns=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(k for k in r if k not in columns)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_fmt(r.get(c)) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    """Rows with numeric-looking fields converted to float."""
    out = []
    with Path(path).open(newline="") as fh:
        for r in csv.DictReader(fh):
            row = {}
            for k, v in r.items():
                try:
                    row[k] = float(v)
                except (TypeError, ValueError):
                    row[k] = v
            out.append(row)
    return out


def trace_rows(trace) -> list[dict]:
    """Deterministic per-step log (no wall-clock columns)."""
    rows = []
    for k in range(len(trace.t)):
        r = {"t": trace.t[k]}
        r.update({n: trace.x[k, i] for i, n in enumerate(STATE_NAMES)})
        r.update({f"meas_{n}": trace.y[k, i] for i, n in enumerate(STATE_NAMES[3:], start=3)})
        r.update({n: trace.u[k, i] for i, n in enumerate(CONTROL_NAMES)})
        r.update(ref_X1=trace.ref[k, 0], ref_Y1=trace.ref[k, 1], ref_XH=trace.ref[k, 2], ref_YH=trace.ref[k, 3])
        r.update({f"w_{n}": trace.w[k, i] for i, n in enumerate(trace.names)})
        r.update(cte=trace.cte[k], cost=trace.cost[k], iterations=trace.iterations[k],
                 converged=trace.converged[k])
        rows.append(r)
    return rows


def timing_rows(trace) -> list[dict]:
    keys = list(trace.timing)
    return [{"t": trace.t[k], **{f"{key}_ms": 1e3 * trace.timing[key][k] for key in keys}}
            for k in range(len(trace.t))]


def write_trace(run_dir, trace) -> None:
    run_dir = Path(run_dir)
    write_csv(run_dir / "trace.csv", trace_rows(trace))
    write_csv(run_dir / "timing.csv", timing_rows(trace))


def metrics_rows(m, **labels) -> list[dict]:
    rows = []
    for key in ("vx", "vy", "pos"):
        r = dict(labels)
        r.update(metric=key, rmse_pre=m.rmse_pre[key], rmse_post=m.rmse_post[key],
                 degradation_pct=m.degradation[key],
                 mitigation_pct=None if m.mitigation is None else m.mitigation[key])
        rows.append(r)
    return rows


def _num(v, digits=4) -> str:
    if v is None or v == "" or (isinstance(v, float) and math.isnan(v)):
        return "n/a"
    return f"{v:.{digits}f}"


def summary_markdown(bench: list[dict] | None = None, matrix: list[dict] | None = None) -> str:
    """Two tables: the solver benchmark and the tier by shift outcome grid."""
    out = ["# Summary", ""]
    if bench:
        out += ["## Computational cost", "",
                "| model | build (ms) | nodes | density (%) | solve median (ms) [95% CI] | p95 (ms) "
                "| ratio | derivative share | adaptation (ms, median/p95) |",
                "|---|---|---|---|---|---|---|---|---|"]
        for r in bench:
            adapt = []
            for k in r:
                if k.endswith("_median_ms") and not k.startswith("solve"):
                    label = k[: -len("_median_ms")]
                    adapt.append(f"{label} {_num(r[k], 3)}/{_num(r.get(label + '_p95_ms'), 3)}")
            out.append(
                f"| {r['model']} | {_num(r['build_ms'], 1)} | {int(r['node_count'])} | {_num(r['density_pct'], 2)} "
                f"| {_num(r['solve_median_ms'], 3)} [{_num(r['solve_ci_lo_ms'], 3)}, {_num(r['solve_ci_hi_ms'], 3)}] "
                f"| {_num(r['solve_p95_ms'], 3)} | {_num(r['ratio_vs_parametric'], 1)} "
                f"| {_num(r['derivative_share'], 3)} | {'; '.join(adapt)} |")
        out.append("")
    if matrix:
        out += ["## Tracking under regime shifts", "",
                "RMSE medians over seeds with 95% bootstrap intervals; degradation against the "
                "ideal-ODE pre-shift baseline; mitigation against the paired frozen run.", "",
                "| tier | shift | adaptive | metric | pre | post [95% CI] | degradation (%) | mitigation (%) |",
                "|---|---|---|---|---|---|---|---|"]
        for r in matrix:
            out.append(
                f"| {r['tier']} | {r['shift']} | {int(r['adaptive'])} | {r['metric']} | {_num(r['rmse_pre'])} "
                f"| {_num(r['rmse_post'])} [{_num(r['rmse_post_ci_lo'])}, {_num(r['rmse_post_ci_hi'])}] "
                f"| {_num(r['degradation_pct'], 1)} | {_num(r.get('mitigation_pct'), 1)} |")
        out.append("")
    return "\n".join(out)
