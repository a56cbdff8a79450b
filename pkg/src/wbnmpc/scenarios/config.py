"""Declarative run configuration (INI) with dotted command-line overrides."""
from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..ocp import OcpConfig
from ..specialists.train import TrainConfig
from ..vehicle import PARAM_NAMES, VehicleParams, load_params, nominal_params
from .sim import SHIFTS, TIERS, Scenario

SECTIONS = ("vehicle", "ocp", "governor", "scenario", "track", "train", "paths")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    vehicle: VehicleParams = field(default_factory=nominal_params)
    ocp: OcpConfig = field(default_factory=OcpConfig)
    window: int = 20
    alpha: float = 0.1
    tier: str = "ideal_ode"
    shift: str = "friction_only"
    shift_time: float = 10.0
    duration: float = 20.0
    adaptive: bool = True
    seed: int = 0
    seeds: tuple = tuple(range(20))
    sigma: float = 0.05
    n_specialists: int = 8
    tiers: tuple = TIERS
    shifts: tuple = ("none", "friction_only", "all_params")
    track: dict = field(default_factory=lambda: dict(straight=3.0, radius=0.8, chicane_radius=0.7,
                                                     chicane_angle=0.5))
    train: TrainConfig = field(default_factory=TrainConfig)
    n_uniform: int = 6000
    n_chirp: int = 20
    train_seed: int = 0
    select_seed: int = 1
    n_bench_solves: int = 100
    library: str = "library"
    out: str = "runs/default"

    def scenario(self, **over) -> Scenario:
        base = dict(tier=self.tier, shift=self.shift, shift_time=self.shift_time, duration=self.duration,
                    adaptive=self.adaptive, seed=self.seed, sigma=self.sigma, window=self.window,
                    alpha=self.alpha)
        base.update(over)
        return Scenario(**base)


def _parse_bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _parse_ints(v: str) -> tuple:
    """``0-19`` or ``0,3,5`` or a mix."""
    out = []
    for part in v.replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _names(v: str) -> tuple:
    return tuple(s.strip() for s in v.split(",") if s.strip())


def _coerce(template, value: str):
    if isinstance(template, bool):
        return _parse_bool(value)
    if isinstance(template, int):
        return int(value)
    if isinstance(template, float):
        return float(value)
    if isinstance(template, tuple):
        return tuple(float(x) for x in value.split(","))
    return value


def _apply(cfg: RunConfig, section: str, key: str, value: str) -> RunConfig:
    try:
        if section == "vehicle":
            if key == "params_file":
                return replace(cfg, vehicle=load_params(value))
            if key not in PARAM_NAMES:
                raise ConfigError(f"unknown vehicle parameter {key!r}")
            return replace(cfg, vehicle=replace(cfg.vehicle, **{key: float(value)}))
        if section == "ocp":
            names = {f.name for f in fields(OcpConfig)}
            if key == "P" and value.strip().lower() in ("", "none"):
                return replace(cfg, ocp=replace(cfg.ocp, P=None))
            if key not in names:
                raise ConfigError(f"unknown ocp option {key!r}")
            tmpl = getattr(cfg.ocp, key)
            val = float(value) if key == "P" else _coerce(tmpl, value)
            return replace(cfg, ocp=replace(cfg.ocp, **{key: val}))
        if section == "train":
            names = {f.name for f in fields(TrainConfig)}
            if key in names:
                tmpl = getattr(cfg.train, key)
                val = tuple(int(x) for x in value.split(",")) if key == "layer_dims" else _coerce(tmpl, value)
                return replace(cfg, train=replace(cfg.train, **{key: val}))
            if key in ("n_uniform", "n_chirp", "train_seed", "select_seed", "n_specialists"):
                return replace(cfg, **{key: int(value)})
            raise ConfigError(f"unknown train option {key!r}")
        if section == "track":
            if key not in cfg.track:
                raise ConfigError(f"unknown track option {key!r}")
            return replace(cfg, track={**cfg.track, key: float(value)})
        if section == "governor":
            if key == "window":
                if int(value) < 2:
                    raise ValueError("window needs at least 2 samples")
                return replace(cfg, window=int(value))
            if key == "alpha":
                if not 0.0 < float(value) <= 1.0:
                    raise ValueError("alpha must lie in (0, 1]")
                return replace(cfg, alpha=float(value))
            raise ConfigError(f"unknown governor option {key!r}")
        if section == "scenario":
            if key == "seeds":
                return replace(cfg, seeds=_parse_ints(value))
            if key == "tiers":
                bad = set(_names(value)) - set(TIERS)
                if bad:
                    raise ConfigError(f"unknown tiers {sorted(bad)}")
                return replace(cfg, tiers=_names(value))
            if key == "shifts":
                bad = set(_names(value)) - set(SHIFTS)
                if bad:
                    raise ConfigError(f"unknown shifts {sorted(bad)}")
                return replace(cfg, shifts=_names(value))
            if key in ("tier", "shift"):
                allowed = TIERS if key == "tier" else SHIFTS
                if value not in allowed:
                    raise ConfigError(f"unknown {key} {value!r}")
                return replace(cfg, **{key: value})
            if key in ("shift_time", "duration", "sigma"):
                return replace(cfg, **{key: float(value)})
            if key in ("seed", "n_bench_solves"):
                return replace(cfg, **{key: int(value)})
            if key == "adaptive":
                return replace(cfg, adaptive=_parse_bool(value))
            raise ConfigError(f"unknown scenario option {key!r}")
        if section == "paths":
            if key not in ("library", "out"):
                raise ConfigError(f"unknown path {key!r}")
            return replace(cfg, **{key: value})
    except ConfigError:
        raise
    except (ValueError, TypeError, FileNotFoundError) as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc
    raise ConfigError(f"unknown section [{section}]")


def load_config(path=None, overrides=()) -> RunConfig:
    """Read an INI file (optional) and apply ``section.key=value`` overrides."""
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        cp.optionxform = str
        try:
            cp.read_string(p.read_text())
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        for section in cp.sections():
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]")
            for key, value in cp.items(section):
                cfg = _apply(cfg, section, key, value)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        lhs, value = item.split("=", 1)
        section, key = lhs.split(".", 1)
        cfg = _apply(cfg, section.strip(), key.strip(), value.strip())
    try:
        cfg.scenario()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def dumps_config(cfg: RunConfig) -> str:
    """Resolved configuration as INI text (the run-directory snapshot)."""
    cp = configparser.ConfigParser()
    cp.optionxform = str

    def fmt(v):
        if isinstance(v, tuple):
            return ",".join(str(x) for x in v)
        return "none" if v is None else str(v)

    cp["vehicle"] = {k: repr(v) for k, v in asdict(cfg.vehicle).items()}
    cp["ocp"] = {k: fmt(v) for k, v in asdict(cfg.ocp).items()}
    cp["governor"] = {"window": str(cfg.window), "alpha": repr(cfg.alpha)}
    cp["scenario"] = {k: fmt(getattr(cfg, k)) for k in
                      ("tier", "shift", "shift_time", "duration", "adaptive", "seed", "seeds", "sigma",
                       "tiers", "shifts", "n_bench_solves")}
    cp["track"] = {k: repr(v) for k, v in cfg.track.items()}
    tr = {k: fmt(v) for k, v in asdict(cfg.train).items()}
    tr.update({k: str(getattr(cfg, k)) for k in
               ("n_uniform", "n_chirp", "train_seed", "select_seed", "n_specialists")})
    cp["train"] = tr
    cp["paths"] = {"library": cfg.library, "out": cfg.out}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
