"""Degradation/mitigation metrics and bootstrap intervals."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

METRICS = ("vx", "vy", "pos")
WARMUP = 2.0


def degradation(post: float, pre_base: float) -> float:
    """Percent change of a post-shift RMSE against the pre-shift baseline
    (nan when the baseline is zero)."""
    if pre_base == 0:
        return float("nan")
    return 100.0 * (post - pre_base) / abs(pre_base)


def mitigation(post_base: float, post_adapt: float, pre_base: float) -> float:
    """Percent of the baseline's degradation removed by adaptation.

    Zero when both runs end equal; nan when the baseline did not degrade.
    """
    if post_base == post_adapt:
        return 0.0
    d_b = degradation(post_base, pre_base)
    d_a = degradation(post_adapt, pre_base)
    if not d_b:
        return float("nan")
    return 100.0 * (d_b - d_a) / abs(d_b)


def errors(trace, v_ref: float) -> dict[str, np.ndarray]:
    """Per-step tracking errors of the true state."""
    return {"vx": trace.x[:, 3] - v_ref, "vy": trace.x[:, 4], "pos": trace.cte}


def _rmse(e: np.ndarray) -> float:
    return float(np.sqrt(np.mean(e * e))) if len(e) else float("nan")


@dataclass
class RunMetrics:
    rmse_pre: dict
    rmse_post: dict
    degradation: dict
    mitigation: dict | None = None
    weights: np.ndarray | None = field(default=None, repr=False)
    latency: np.ndarray | None = field(default=None, repr=False)


def window_rmse(trace, shift_time: float, v_ref: float, warmup: float = WARMUP):
    e = errors(trace, v_ref)
    pre = (trace.t >= warmup) & (trace.t < shift_time)
    post = trace.t >= shift_time
    return ({k: _rmse(e[k][pre]) for k in METRICS}, {k: _rmse(e[k][post]) for k in METRICS})


def compute_metrics(trace, shift_time: float, baseline_trace=None, pre_base: dict | None = None,
                    v_ref: float = 1.5, warmup: float = WARMUP) -> RunMetrics:
    """Pre/post RMSEs, degradation and (with a paired baseline) mitigation.

    ``pre_base`` defaults to the baseline run's pre-shift RMSE, or to this
    run's own when no baseline is given.  Mitigation is ``None`` without a
    baseline.
    """
    if baseline_trace is not None and len(baseline_trace.t) != len(trace.t):
        raise ValueError("traces are not aligned in time")
    pre, post = window_rmse(trace, shift_time, v_ref, warmup)
    mit = None
    if baseline_trace is not None:
        b_pre, b_post = window_rmse(baseline_trace, shift_time, v_ref, warmup)
        pre_base = pre_base or b_pre
        mit = {k: mitigation(b_post[k], post[k], pre_base[k]) for k in METRICS}
    pre_base = pre_base or pre
    deg = {k: degradation(post[k], pre_base[k]) for k in METRICS}
    return RunMetrics(pre, post, deg, mit, weights=trace.w, latency=trace.timing.get("governor"))


def bootstrap_ci(x, stat=np.median, n_resamples: int = 1000, level: float = 0.95,
                 seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval of ``stat``."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        return float("nan"), float("nan")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(x), size=(n_resamples, len(x)))
    vals = np.array([stat(x[i]) for i in idx])
    a = (1.0 - level) / 2
    return float(np.quantile(vals, a)), float(np.quantile(vals, 1 - a))
