"""Frozen MLP specialists and their on-disk format."""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..vehicle import VehicleParams

FORMAT_VERSION = 1
N_IN = 5
N_OUT = 6
DEFAULT_DIMS = (N_IN, 64, 64, 64, N_OUT)


def net_features(x, u) -> np.ndarray:
    """Network inputs (vx, vy, omega, delta, D) from state and control."""
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    return np.concatenate([x[..., 3:6], u[..., 0:2]], axis=-1)


def body_frame_targets(x, xdot) -> np.ndarray:
    """Rotate the pose rates of ``xdot`` into the body frame.

    The first three columns become (vx, vy, omega) - the kinematic rows the
    networks are trained to reproduce - and the dynamic rows pass through.
    """
    x = np.asarray(x)
    xdot = np.asarray(xdot)
    c, s = np.cos(x[..., 2]), np.sin(x[..., 2])
    out = np.array(xdot, dtype=np.float64, copy=True)
    out[..., 0] = c * xdot[..., 0] + s * xdot[..., 1]
    out[..., 1] = -s * xdot[..., 0] + c * xdot[..., 1]
    return out


def layer_shapes(dims):
    return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]


def n_weights(dims) -> int:
    return sum(o * i + o for o, i in layer_shapes(dims))


def unpack(theta: np.ndarray, dims):
    """Views (W, b) per layer into the flat vector ``theta``."""
    Ws, bs = [], []
    k = 0
    for o, i in layer_shapes(dims):
        Ws.append(theta[k:k + o * i].reshape(o, i))
        k += o * i
        bs.append(theta[k:k + o])
        k += o
    return Ws, bs


def xavier_init(dims, rng: np.random.Generator) -> np.ndarray:
    theta = np.zeros(n_weights(dims))
    Ws, _ = unpack(theta, dims)
    for W in Ws:
        o, i = W.shape
        lim = np.sqrt(6.0 / (i + o))
        W[...] = rng.uniform(-lim, lim, size=(o, i))
    return theta


def mlp_forward(theta, dims, Z):
    """Normalised-space forward pass; returns output and hidden activations."""
    Ws, bs = unpack(theta, dims)
    acts = [Z]
    h = Z
    for W, b in zip(Ws[:-1], bs[:-1]):
        h = np.tanh(h @ W.T + b)
        acts.append(h)
    return h @ Ws[-1].T + bs[-1], acts


def mlp_backward(theta, dims, acts, dY) -> np.ndarray:
    """Gradient of a loss w.r.t. ``theta`` given dLoss/dOutput ``dY``."""
    Ws, _ = unpack(theta, dims)
    grad = np.zeros_like(theta)
    gWs, gbs = unpack(grad, dims)
    delta = dY
    for li in range(len(Ws) - 1, -1, -1):
        h = acts[li]
        gWs[li][...] = delta.T @ h
        gbs[li][...] = delta.sum(axis=0)
        if li > 0:
            delta = (delta @ Ws[li]) * (1.0 - h * h)
    return grad


@dataclass(frozen=True)
class SpecialistNet:
    """Frozen tanh MLP ``(vx, vy, omega, delta, D) -> 6 body-frame rates``."""

    layer_dims: tuple
    theta: np.ndarray
    input_mean: np.ndarray
    input_std: np.ndarray
    output_mean: np.ndarray
    output_std: np.ndarray
    regime_tag: dict = field(default_factory=dict)
    train_protocol: str = "hybrid"
    heldout_rmse: float = float("nan")

    def __post_init__(self):
        for name in ("theta", "input_mean", "input_std", "output_mean", "output_std"):
            arr = np.array(getattr(self, name), dtype=np.float64, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        if len(self.theta) != n_weights(self.layer_dims):
            raise ValueError("weight vector does not match layer_dims")
        if not (np.all(self.input_std > 0) and np.all(self.output_std > 0)):
            raise ValueError("normalisation std must be strictly positive")
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("non-finite weights")

    @property
    def weights(self):
        return unpack(self.theta, self.layer_dims)

    @property
    def regime(self) -> VehicleParams | None:
        return VehicleParams(**self.regime_tag) if self.regime_tag else None

    def normalize_inputs(self, feats):
        return (np.asarray(feats) - self.input_mean) / self.input_std

    def denormalize_outputs(self, yn):
        return np.asarray(yn) * self.output_std + self.output_mean

    def normalize_outputs(self, y):
        return (np.asarray(y) - self.output_mean) / self.output_std

    def forward(self, feats) -> np.ndarray:
        """Reference forward pass in physical units."""
        yn, _ = mlp_forward(self.theta, self.layer_dims, self.normalize_inputs(feats))
        return self.denormalize_outputs(yn)

    def dynamic_rows(self, x, u) -> np.ndarray:
        return self.forward(net_features(x, u))[..., 3:6]

    # --- serialisation -----------------------------------------------------
    def to_bytes(self) -> bytes:
        meta = dict(
            format_version=FORMAT_VERSION,
            layer_dims=list(self.layer_dims),
            regime_tag=self.regime_tag,
            train_protocol=self.train_protocol,
            heldout_rmse=self.heldout_rmse,
        )
        buf = io.BytesIO()
        Ws, bs = self.weights
        arrays = {f"W{i}": W for i, W in enumerate(Ws)}
        arrays.update({f"b{i}": b for i, b in enumerate(bs)})
        np.savez(
            buf,
            meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
            input_mean=self.input_mean, input_std=self.input_std,
            output_mean=self.output_mean, output_std=self.output_std,
            **arrays,
        )
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "SpecialistNet":
        with np.load(io.BytesIO(data)) as z:
            meta = json.loads(bytes(z["meta"]).decode())
            if meta.get("format_version") != FORMAT_VERSION:
                raise ValueError(f"unsupported specialist format {meta.get('format_version')}")
            dims = meta["layer_dims"]
            nl = len(dims) - 1
            theta = np.concatenate(
                [np.concatenate([z[f"W{i}"].ravel(), z[f"b{i}"]]) for i in range(nl)]
            )
            return cls(
                layer_dims=tuple(dims), theta=theta,
                input_mean=z["input_mean"], input_std=z["input_std"],
                output_mean=z["output_mean"], output_std=z["output_std"],
                regime_tag=meta["regime_tag"], train_protocol=meta["train_protocol"],
                heldout_rmse=meta["heldout_rmse"],
            )

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "SpecialistNet":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"specialist file not found: {path}")
        return cls.from_bytes(path.read_bytes())
