"""Specialist libraries and greedy worst-case regime selection."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from itertools import product
from pathlib import Path

import numpy as np

from ..governor import simplex_lstsq
from ..vehicle import VehicleParams, continuous_dynamics, embed_dynamics, make_regime, nominal_params
from .net import SpecialistNet, net_features

MANIFEST_VERSION = 1

# shift axes exercised by the experiments
MU_GRID = (0.5, 0.75, 1.0, 1.25)
MASS_GRID = (1.0, 1.2)
DRAG_GRID = (1.0, 1.4)


@dataclass(frozen=True)
class OdeSpecialist:
    """Exact model of one regime, used for the ideal-ODE tiers."""

    params: VehicleParams

    kind = "ode"

    @property
    def regime(self) -> VehicleParams:
        return self.params

    def dynamic_rows(self, x, u) -> np.ndarray:
        return continuous_dynamics(x, u, self.params)[..., 3:6]

    def embed(self, g, xs, us) -> list:
        return embed_dynamics(g, xs, us, self.params)[3:6]


def _net_dynamic_rows(net: SpecialistNet, x, u):
    return net.forward(net_features(x, u))[..., 3:6]


def _stack_nets(nets):
    """Weights of same-shaped nets stacked along a leading axis; only the
    dynamic output rows are kept."""
    layers = [n.weights for n in nets]
    nl = len(layers[0][0])
    Ws = [np.stack([L[0][i] for L in layers]) for i in range(nl)]
    bs = [np.stack([L[1][i] for L in layers]) for i in range(nl)]
    Ws[-1] = Ws[-1][:, 3:6]
    bs[-1] = bs[-1][:, 3:6]
    return dict(
        WT=[np.ascontiguousarray(W.transpose(0, 2, 1)) for W in Ws], b=[b[:, None, :] for b in bs],
        in_mean=np.stack([n.input_mean for n in nets])[:, None, :],
        in_std=np.stack([n.input_std for n in nets])[:, None, :],
        out_mean=np.stack([n.output_mean[3:6] for n in nets])[:, None, :],
        out_std=np.stack([n.output_std[3:6] for n in nets])[:, None, :],
    )


def _stacked_dynamic_rows(st, x, u):
    f = net_features(x, u)
    single = f.ndim == 1
    h = (f.reshape(1, -1, f.shape[-1]) - st["in_mean"]) / st["in_std"]
    last = len(st["WT"]) - 1
    for i, (WT, b) in enumerate(zip(st["WT"], st["b"])):
        h = h @ WT + b
        if i < last:
            h = np.tanh(h)
    y = h * st["out_std"] + st["out_mean"]
    return y[:, 0] if single else y


class SpecialistLibrary:
    """Ordered collection of frozen specialists (nets or exact ODEs)."""

    def __init__(self, specialists, names=None):
        self.specialists = list(specialists)
        if len(self.specialists) < 1:
            raise ValueError("library needs at least one specialist")
        nets = [s for s in self.specialists if isinstance(s, SpecialistNet)]
        if nets and len({s.layer_dims for s in nets}) > 1:
            raise ValueError("specialists must share layer_dims")
        self.names = list(names) if names is not None else [f"s{i}" for i in range(len(self))]
        self._stack = _stack_nets(self.specialists) if len(nets) == len(self.specialists) else None

    def __len__(self) -> int:
        return len(self.specialists)

    def __getitem__(self, i):
        return self.specialists[i]

    @property
    def regimes(self) -> list[VehicleParams]:
        return [s.regime for s in self.specialists]

    def predict(self, x, u) -> np.ndarray:
        """Dynamic rows of every specialist: ``(N, 3)`` or ``(N, n, 3)``."""
        if self._stack is not None:
            return _stacked_dynamic_rows(self._stack, x, u)
        out = []
        for s in self.specialists:
            if isinstance(s, SpecialistNet):
                out.append(_net_dynamic_rows(s, x, u))
            else:
                out.append(s.dynamic_rows(x, u))
        return np.stack(out)

    def blend(self, x, u, w) -> np.ndarray:
        """Full 6-row ensemble derivative with shared analytic kinematics."""
        x = np.asarray(x, dtype=np.float64)
        dyn = np.tensordot(np.asarray(w, dtype=np.float64), self.predict(x, u), axes=1)
        psi, vx, vy, om = x[..., 2], x[..., 3], x[..., 4], x[..., 5]
        c, s = np.cos(psi), np.sin(psi)
        kin = np.stack([vx * c - vy * s, vx * s + vy * c, om], axis=-1)
        return np.concatenate([kin, dyn], axis=-1)

    # --- persistence ---------------------------------------------------
    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        entries = []
        for i, (s, name) in enumerate(zip(self.specialists, self.names)):
            if isinstance(s, SpecialistNet):
                fn = f"{i:02d}_{name}.npz"
                s.save(d / fn)
                entries.append({"kind": "net", "file": fn, "name": name})
            else:
                entries.append({"kind": "ode", "params": asdict(s.params), "name": name})
        manifest = {"format_version": MANIFEST_VERSION, "specialists": entries}
        path = d / "manifest.json"
        path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, directory) -> "SpecialistLibrary":
        d = Path(directory)
        path = d / "manifest.json"
        if not path.exists():
            raise FileNotFoundError(f"library manifest not found: {path}")
        manifest = json.loads(path.read_text())
        if manifest.get("format_version") != MANIFEST_VERSION:
            raise ValueError(f"unsupported manifest version {manifest.get('format_version')}")
        specs, names = [], []
        for e in manifest["specialists"]:
            if e["kind"] == "net":
                specs.append(SpecialistNet.load(d / e["file"]))
            elif e["kind"] == "ode":
                specs.append(OdeSpecialist(VehicleParams(**e["params"])))
            else:
                raise ValueError(f"unknown specialist kind {e['kind']!r}")
            names.append(e["name"])
        return cls(specs, names)


def regime_name(p: VehicleParams, base: VehicleParams | None = None) -> str:
    base = base or nominal_params()
    return f"mu{p.mu_scale:g}_m{p.m / base.m:g}_cd{p.Cd / base.Cd:g}"


def candidate_grid(base: VehicleParams | None = None) -> list[VehicleParams]:
    """The 4 x 2 x 2 friction/mass/drag grid, nominal first."""
    base = base or nominal_params()
    grid = [make_regime(base, mu_scale=mu * base.mu_scale, mass_factor=mf, drag_factor=df)
            for mf, df, mu in product(MASS_GRID, DRAG_GRID, MU_GRID)]
    grid.sort(key=lambda p: p != base)
    return grid


def _dyn_columns(cands, states, controls) -> np.ndarray:
    """(n_cand, 3 n) stacked dynamic rows on the validation set."""
    return np.stack([continuous_dynamics(states, controls, p)[:, 3:6].ravel() for p in cands])


def hull_residual(F: np.ndarray, members, target: int) -> float:
    """Mean squared residual of the best simplex blend of ``members``."""
    A = F[list(members)].T
    b = F[target]
    _, obj = simplex_lstsq(A, b)
    return obj / len(b)


def select_regimes(candidates, N: int, val_states, start: int | None = None) -> list[int]:
    """Greedy worst-case selection; returns candidate indices in pick order.

    ``val_states`` is a ``(states, controls)`` pair.  The first pick is
    ``start`` if given, else the candidate farthest from the candidate
    centroid (an extreme of the set).  Each further pick is the candidate
    worst approximated by the convex hull of the picks so far; ties go to
    the lower index.
    """
    if N > len(candidates):
        raise ValueError("N exceeds the number of candidates")
    if N < 1:
        raise ValueError("N must be positive")
    states, controls = val_states
    F = _dyn_columns(candidates, np.asarray(states), np.asarray(controls))
    if start is None:
        d = np.sum((F - F.mean(axis=0)) ** 2, axis=1)
        start = int(np.argmax(d))
    chosen = [int(start)]
    while len(chosen) < N:
        best, best_r = None, -1.0
        for j in range(len(candidates)):
            if j in chosen:
                continue
            r = hull_residual(F, chosen, j)
            if r > best_r:
                best, best_r = j, r
        chosen.append(best)
    return chosen


def select_library(candidates, N: int, val_states, start: int | None = None) -> SpecialistLibrary:
    """Greedy selection returning a library of exact-ODE specialists."""
    idx = select_regimes(candidates, N, val_states, start)
    base = nominal_params()
    lib = SpecialistLibrary([OdeSpecialist(candidates[i]) for i in idx],
                            [regime_name(candidates[i], base) for i in idx])
    lib.indices = idx
    return lib


def train_library(regimes, names=None, n_uniform: int = 6000, n_chirp: int = 20, seed: int = 0,
                  cfg=None, progress=None) -> dict[str, SpecialistLibrary]:
    """Train one specialist per regime; returns a library per protocol.

    Specialist ``i`` uses data seed ``seed + i`` and training seed
    ``seed + i`` so libraries are reproducible member by member.
    """
    from .data import generate_dataset
    from .train import TrainConfig, train_specialist_pair

    cfg = cfg or TrainConfig()
    names = names or [regime_name(p) for p in regimes]
    nets = {"adam_only": [], "hybrid": []}
    for i, p in enumerate(regimes):
        data = generate_dataset(p, n_uniform, n_chirp, seed=seed + i)
        pair = train_specialist_pair(data, seed + i, cfg)
        for k in nets:
            nets[k].append(pair[k])
        if progress is not None:
            progress(i, names[i], pair)
    return {k: SpecialistLibrary(v, names) for k, v in nets.items()}
