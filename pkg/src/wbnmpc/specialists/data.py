"""Synthetic training data: uniform box samples plus steering-chirp rollouts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..vehicle import VehicleParams, continuous_dynamics, plant_step

# sampling box for (vx, vy, omega, delta, D)
UNIFORM_BOX = dict(
    vx=(0.5, 3.0),
    vy=(-0.5, 0.5),
    omega=(-5.0, 5.0),
    delta=(-0.35, 0.35),
    D=(-0.1, 1.0),
)

SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST = 0, 1, 2
SOURCE_UNIFORM, SOURCE_CHIRP = 0, 1


@dataclass(frozen=True)
class TrainingSet:
    """Rows of (state, control) with exact continuous-time derivatives."""

    states: np.ndarray  # (n, 6)
    controls: np.ndarray  # (n, 2)
    targets: np.ndarray  # (n, 6), continuous_dynamics(state, control)
    split: np.ndarray  # (n,) SPLIT_*
    source: np.ndarray  # (n,) SOURCE_*
    regime: VehicleParams

    def __len__(self):
        return len(self.states)

    def subset(self, which: int):
        m = self.split == which
        return self.states[m], self.controls[m], self.targets[m]


def _chirp(t, amp, f0, f1, T):
    return amp * np.sin(2 * np.pi * (f0 + (f1 - f0) * t / T) * t)


def chirp_rollout(p: VehicleParams, rng: np.random.Generator, T: float = 3.0,
                  Ts: float = 0.02, d_levels=(0.15, 0.35, 0.6)):
    """Simulate one steering chirp with throttle held at staged levels."""
    amp = rng.uniform(0.15, 0.35)
    f0 = rng.uniform(0.2, 0.8)
    f1 = rng.uniform(2.0, 5.0)
    x = np.array([0.0, 0.0, rng.uniform(-np.pi, np.pi), rng.uniform(0.8, 2.5), 0.0, 0.0])
    n = int(round(T / Ts))
    stage = max(1, n // len(d_levels))
    levels = rng.permutation(np.asarray(d_levels))
    xs, us = [], []
    for k in range(n):
        u = np.array([_chirp(k * Ts, amp, f0, f1, T), levels[min(k // stage, len(levels) - 1)]])
        xs.append(x)
        us.append(u)
        x = plant_step(x, u, p, Ts, substeps=10)
        if not np.all(np.isfinite(x)) or x[3] < 0.2:
            break
    return np.array(xs), np.array(us)


def generate_dataset(p: VehicleParams, n_uniform: int, n_chirp_trajs: int, seed: int,
                     split_fracs=(0.8, 0.1, 0.1)) -> TrainingSet:
    """Deterministic (given ``seed``) hybrid dataset for regime ``p``."""
    if n_uniform <= 0 or n_chirp_trajs <= 0:
        raise ValueError("sample counts must be positive")
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in UNIFORM_BOX.values()])
    hi = np.array([b[1] for b in UNIFORM_BOX.values()])
    feats = rng.uniform(lo, hi, size=(n_uniform, 5))
    xs_u = np.zeros((n_uniform, 6))
    xs_u[:, 2] = rng.uniform(-np.pi, np.pi, n_uniform)
    xs_u[:, 3:6] = feats[:, 0:3]
    us_u = feats[:, 3:5]
    chunks_x, chunks_u = [xs_u], [us_u]
    for _ in range(n_chirp_trajs):
        cx, cu = chirp_rollout(p, rng)
        chunks_x.append(cx)
        chunks_u.append(cu)
    states = np.concatenate(chunks_x)
    controls = np.concatenate(chunks_u)
    source = np.concatenate([np.full(n_uniform, SOURCE_UNIFORM)]
                            + [np.full(len(c), SOURCE_CHIRP) for c in chunks_x[1:]])
    targets = continuous_dynamics(states, controls, p)
    n = len(states)
    order = rng.permutation(n)
    n_tr = int(round(split_fracs[0] * n))
    n_va = int(round(split_fracs[1] * n))
    split = np.empty(n, dtype=np.int64)
    split[order[:n_tr]] = SPLIT_TRAIN
    split[order[n_tr:n_tr + n_va]] = SPLIT_VAL
    split[order[n_tr + n_va:]] = SPLIT_TEST
    return TrainingSet(states, controls, targets, split, source, p)
