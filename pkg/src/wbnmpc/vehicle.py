"""Dynamic single-track (bicycle) model with Pacejka lateral tyre forces.

State ``x = (X, Y, psi, vx, vy, omega)``, input ``u = (delta, D)``.  The same
equations drive the numeric plant, the training targets and the symbolic
parametric model; they are written once in :func:`_rhs` against a small math
namespace.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from .symgraph import ExprGraph, Sym, sym

STATE_NAMES = ("X", "Y", "psi", "vx", "vy", "omega")
CONTROL_NAMES = ("delta", "D")
N_STATE = 6
N_CONTROL = 2

# slip-angle denominator regularisation [m/s]
VX_EPS = 1e-3


@dataclass(frozen=True)
class VehicleParams:
    m: float
    Iz: float
    lf: float
    lr: float
    Bf: float
    Cf: float
    Df: float
    Br: float
    Cr: float
    Dr: float
    Cm1: float
    Cm2: float
    Cr0: float
    Cd: float
    mu_scale: float = 1.0

    def __post_init__(self):
        for name in ("m", "Iz", "lf", "lr", "Df", "Dr", "mu_scale"):
            v = getattr(self, name)
            if not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise ValueError(f"{f.name} is not finite")

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES])

    @classmethod
    def from_vector(cls, v) -> "VehicleParams":
        return cls(**{n: float(x) for n, x in zip(PARAM_NAMES, v)})


PARAM_NAMES = tuple(f.name for f in fields(VehicleParams))


def load_params(path) -> VehicleParams:
    """Read a ``name = value`` file; ``#`` starts a comment."""
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValueError(f"malformed line in {path}: {raw!r}")
        key = key.strip()
        if key not in PARAM_NAMES:
            raise ValueError(f"unknown vehicle parameter {key!r} in {path}")
        values[key] = float(val)
    missing = set(PARAM_NAMES) - set(values) - {"mu_scale"}
    if missing:
        raise ValueError(f"missing vehicle parameters in {path}: {sorted(missing)}")
    return VehicleParams(**values)


def dump_params(p: VehicleParams, path) -> None:
    lines = [f"{k} = {v!r}" for k, v in asdict(p).items()]
    Path(path).write_text("\n".join(lines) + "\n")


def nominal_params() -> VehicleParams:
    ref = resources.files("wbnmpc") / "data" / "nominal_vehicle.txt"
    with resources.as_file(ref) as path:
        return load_params(path)


def make_regime(base: VehicleParams, mu_scale: float | None = None,
                mass_factor: float | None = None, drag_factor: float | None = None) -> VehicleParams:
    """Shifted copy of ``base``: friction set, mass and drag multiplied."""
    changes = {}
    if mu_scale is not None:
        if mu_scale <= 0:
            raise ValueError("mu_scale must be positive")
        changes["mu_scale"] = float(mu_scale)
    if mass_factor is not None:
        if mass_factor <= 0:
            raise ValueError("mass_factor must be positive")
        changes["m"] = base.m * mass_factor
    if drag_factor is not None:
        if drag_factor <= 0:
            raise ValueError("drag_factor must be positive")
        changes["Cd"] = base.Cd * drag_factor
    return replace(base, **changes)


NUMPY_NS = SimpleNamespace(sin=np.sin, cos=np.cos, atan=np.arctan)
MATH_NS = SimpleNamespace(sin=math.sin, cos=math.cos, atan=math.atan)
SYM_NS = SimpleNamespace(sin=sym.sin, cos=sym.cos, atan=sym.atan)


def _rhs(psi, vx, vy, omega, delta, D, p, ns):
    """Returns (Xdot, Ydot, psidot, vxdot, vydot, omegadot)."""
    cpsi, spsi = ns.cos(psi), ns.sin(psi)
    Xd = vx * cpsi - vy * spsi
    Yd = vx * spsi + vy * cpsi
    den = vx + VX_EPS
    alpha_f = delta - ns.atan((vy + p.lf * omega) / den)
    alpha_r = -ns.atan((vy - p.lr * omega) / den)
    Fyf = p.mu_scale * p.Df * ns.sin(p.Cf * ns.atan(p.Bf * alpha_f))
    Fyr = p.mu_scale * p.Dr * ns.sin(p.Cr * ns.atan(p.Br * alpha_r))
    Fx = (p.Cm1 - p.Cm2 * vx) * D - p.Cr0 - p.Cd * vx * vx
    cd, sd = ns.cos(delta), ns.sin(delta)
    vxd = (Fx - Fyf * sd + p.m * vy * omega) / p.m
    vyd = (Fyr + Fyf * cd - p.m * vx * omega) / p.m
    omd = (Fyf * p.lf * cd - Fyr * p.lr) / p.Iz
    return Xd, Yd, omega, vxd, vyd, omd


def continuous_dynamics(x, u, p: VehicleParams) -> np.ndarray:
    """State derivative; ``x`` (..., 6) and ``u`` (..., 2) broadcast."""
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if x.ndim == 1 and u.ndim == 1:
        out = _rhs(x[2], x[3], x[4], x[5], u[0], u[1], p, MATH_NS)
        return np.array(out)
    out = _rhs(x[..., 2], x[..., 3], x[..., 4], x[..., 5], u[..., 0], u[..., 1], p, NUMPY_NS)
    return np.stack(np.broadcast_arrays(*out), axis=-1)


def slip_angles(x, u, p: VehicleParams) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    den = x[..., 3] + VX_EPS
    af = u[..., 0] - np.arctan((x[..., 4] + p.lf * x[..., 5]) / den)
    ar = -np.arctan((x[..., 4] - p.lr * x[..., 5]) / den)
    return af, ar


def rk4_step(x, u, p: VehicleParams, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step with zero-order-hold input."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=np.float64)
    k1 = continuous_dynamics(x, u, p)
    k2 = continuous_dynamics(x + 0.5 * dt * k1, u, p)
    k3 = continuous_dynamics(x + 0.5 * dt * k2, u, p)
    k4 = continuous_dynamics(x + dt * k3, u, p)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def plant_step(x, u, p: VehicleParams, Ts: float, substeps: int = 10) -> np.ndarray:
    """Advance the ground-truth plant by one control period."""
    h = Ts / substeps
    for _ in range(substeps):
        x = rk4_step(x, u, p, h)
    return x


def embed_dynamics(g: ExprGraph, xs, us, p) -> list:
    """Append the model equations to ``g``.

    ``xs``/``us`` are 6/2 symbolic handles; ``p`` is either a
    :class:`VehicleParams` (values baked in as constants) or an object whose
    attributes are parameter handles.
    """
    out = _rhs(xs[2], xs[3], xs[4], xs[5], us[0], us[1], p, SYM_NS)
    return [o if isinstance(o, Sym) else Sym(g, g.const(o)) for o in out]


def build_parametric_graph(baked: VehicleParams | None = None) -> ExprGraph:
    """Symbolic model with 8 variable slots (state, input).

    Without ``baked`` every entry of :data:`PARAM_NAMES` is a parameter slot,
    so friction, mass or drag can be changed by writing the parameter vector.
    With ``baked`` the values are frozen in as constants.
    """
    n_params = 0 if baked is not None else len(PARAM_NAMES)
    g = ExprGraph(N_STATE + N_CONTROL, n_params)
    v = sym.variables(g)
    if baked is None:
        p = SimpleNamespace(**{n: Sym(g, g.param(i)) for i, n in enumerate(PARAM_NAMES)})
    else:
        p = baked
    out = embed_dynamics(g, v[:N_STATE], v[N_STATE:], p)
    g.set_outputs(o.id for o in out)
    return g
