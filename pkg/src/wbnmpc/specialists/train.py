"""Physics-informed specialist training: Adam, then optional L-BFGS."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, asdict

import numpy as np

from .data import SPLIT_TEST, SPLIT_TRAIN, SPLIT_VAL, TrainingSet
from .net import DEFAULT_DIMS, SpecialistNet, body_frame_targets, mlp_backward, mlp_forward, net_features, xavier_init
from .optim import Adam, lbfgs

log = logging.getLogger(__name__)

PROTOCOLS = ("adam_only", "hybrid")


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    layer_dims: tuple = DEFAULT_DIMS
    lam: float = 0.1
    lr: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 5000
    patience: int = 200
    lbfgs_iters: int = 500
    lbfgs_memory: int = 10


def _stats(a: np.ndarray):
    mean = a.mean(axis=0)
    std = a.std(axis=0)
    # constant columns keep unit scale
    std = np.where(std > 1e-12, std, 1.0)
    return mean, std


def physics_loss(states, controls, net: SpecialistNet) -> float:
    """Mean squared kinematic mismatch, scaled by the output std.

    The kinematic rows of the network (body-frame pose rates) must equal the
    raw (vx, vy, omega) of the input state.
    """
    y = net.forward(net_features(states, controls))
    kin = np.asarray(states)[..., 3:6]
    r = (y[..., 0:3] - kin) / net.output_std[0:3]
    return float(np.mean(r * r))


class _Objective:
    """L_total = L_data + lam * L_phy on one batch, in normalised units."""

    def __init__(self, dims, Z, Tn, kin_raw, out_mean, out_std, lam):
        self.dims = dims
        self.Z = Z
        self.Tn = Tn
        self.kin_n = (kin_raw - out_mean[0:3]) / out_std[0:3]
        self.lam = lam

    def __call__(self, theta):
        Y, acts = mlp_forward(theta, self.dims, self.Z)
        E = Y - self.Tn
        n = len(Y)
        # kinematic residual: (y_raw - kin_raw) / std == y_n - kin_n
        K = Y[:, 0:3] - self.kin_n
        ld = np.mean(E * E)
        lp = np.mean(K * K)
        dY = 2.0 * E / E.size
        dY[:, 0:3] += self.lam * 2.0 * K / K.size
        g = mlp_backward(theta, self.dims, acts, dY)
        return float(ld + self.lam * lp), g


def _normalized_rmse(theta, dims, Z, Tn) -> float:
    Y, _ = mlp_forward(theta, dims, Z)
    return float(np.sqrt(np.mean((Y - Tn) ** 2)))


def _prepare(data: TrainingSet):
    feats = net_features(data.states, data.controls)
    tgt = body_frame_targets(data.states, data.targets)
    tr = data.split == SPLIT_TRAIN
    in_mean, in_std = _stats(feats[tr])
    out_mean, out_std = _stats(tgt[tr])
    parts = {}
    for name, s in (("train", SPLIT_TRAIN), ("val", SPLIT_VAL), ("test", SPLIT_TEST)):
        m = data.split == s
        if not m.any():
            m = tr
        parts[name] = (
            (feats[m] - in_mean) / in_std,
            (tgt[m] - out_mean) / out_std,
            data.states[m][:, 3:6],
        )
    return parts, (in_mean, in_std, out_mean, out_std)


def _freeze(theta, dims, stats, data, protocol, rmse) -> SpecialistNet:
    in_mean, in_std, out_mean, out_std = stats
    return SpecialistNet(
        layer_dims=dims, theta=theta, input_mean=in_mean, input_std=in_std,
        output_mean=out_mean, output_std=out_std,
        regime_tag=asdict(data.regime), train_protocol=protocol, heldout_rmse=rmse,
    )


def train_specialist_pair(data: TrainingSet, seed: int, cfg: TrainConfig = TrainConfig()) -> dict:
    """Train once and return both protocol outputs.

    The ``adam_only`` net is the best Adam checkpoint; ``hybrid`` continues
    from that checkpoint with L-BFGS.  Identical to calling
    :func:`train_specialist` twice with the same seed.
    """
    if len(data) == 0:
        raise ValueError("empty training set")
    dims = tuple(cfg.layer_dims)
    rng = np.random.default_rng(seed)
    parts, stats = _prepare(data)
    out_mean, out_std = stats[2], stats[3]
    Ztr, Ttr, Ktr = parts["train"]
    full = _Objective(dims, Ztr, Ttr, Ktr, out_mean, out_std, cfg.lam)
    val = _Objective(dims, *parts["val"], out_mean, out_std, cfg.lam)

    theta = xavier_init(dims, rng)
    opt = Adam(theta, lr=cfg.lr)
    best, best_val, since = theta.copy(), math.inf, 0
    n = len(Ztr)
    for epoch in range(cfg.max_epochs):
        perm = rng.permutation(n)
        for k in range(0, n, cfg.batch_size):
            idx = perm[k:k + cfg.batch_size]
            batch = _Objective(dims, Ztr[idx], Ttr[idx], Ktr[idx], out_mean, out_std, cfg.lam)
            loss, g = batch(theta)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            opt.step(g)
        vloss = val(theta)[0]
        if not math.isfinite(vloss):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
        if vloss < best_val:
            best, best_val, since = theta.copy(), vloss, 0
        else:
            since += 1
            if since >= cfg.patience:
                break
    log.info("adam stopped after %d epochs, best val loss %.3e", epoch + 1, best_val)
    Zte, Tte, _ = parts["test"]
    out = {"adam_only": _freeze(best, dims, stats, data, "adam_only",
                                _normalized_rmse(best, dims, Zte, Tte))}

    res = lbfgs(full, best, memory=cfg.lbfgs_memory, max_iter=cfg.lbfgs_iters)
    theta_h = res.x
    if val(theta_h)[0] > best_val or not np.all(np.isfinite(theta_h)):
        log.warning("L-BFGS did not improve validation loss (%s); keeping Adam weights", res.message)
        theta_h = best
    log.info("lbfgs: %d iterations (%s), train loss %.3e", res.iterations, res.message, res.f)
    out["hybrid"] = _freeze(theta_h, dims, stats, data, "hybrid",
                            _normalized_rmse(theta_h, dims, Zte, Tte))
    return out


def train_specialist(data: TrainingSet, protocol: str, seed: int,
                     cfg: TrainConfig = TrainConfig()) -> SpecialistNet:
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")
    if protocol == "adam_only":
        return train_specialist_pair(data, seed, TrainConfig(**{**asdict(cfg), "lbfgs_iters": 0}))["adam_only"]
    return train_specialist_pair(data, seed, cfg)["hybrid"]
