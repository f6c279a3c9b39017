"""Run configuration: a versioned, JSON-serializable bundle of settings."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

__all__ = [
    "ConfigError",
    "ParamsConfig",
    "BasisConfig",
    "StationaryConfig",
    "ActuatorConfig",
    "RiccatiConfig",
    "RunConfig",
    "SimConfig",
    "load_config",
    "save_config",
    "apply_override",
]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; maps to CLI exit code 2."""


@dataclass
class ParamsConfig:
    nu: float = 0.1
    l0: float = 1.0
    gamma0: float = 1.0


@dataclass
class BasisConfig:
    L: float = 1.0
    M: int = 64


@dataclass
class StationaryConfig:
    mode: str = "constant"  # "constant" | "minimize"
    which: int = 0  # constant branch: -1, 0, +1
    theta: float = 0.0
    C: float = 0.0
    init_value: float = 0.9  # minimize: initial constant level ...
    init_cos: float = 0.0  # ... plus this amplitude of cos(pi x / L)
    tol: float = 1e-8
    max_iters: int = 20000


@dataclass
class ActuatorConfig:
    a: float = 0.25
    b: float = 0.75
    T0: float = 1.0


@dataclass
class RiccatiConfig:
    method: str = "newton"  # "newton" | "integrate"
    tol: float = 1e-9
    max_iters: int = 50


@dataclass
class RunConfig:
    dt: float = 1e-3
    t_end: float = 20.0
    rho: float = 1e-2
    closed_loop: bool = True
    nonlinear: bool = True
    scheme: str = "imex1"  # "imex1" | "imex2"
    record_every: int = 1


@dataclass
class SimConfig:
    schema_version: int = SCHEMA_VERSION
    params: ParamsConfig = field(default_factory=ParamsConfig)
    basis: BasisConfig = field(default_factory=BasisConfig)
    stationary: StationaryConfig = field(default_factory=StationaryConfig)
    actuator: ActuatorConfig = field(default_factory=ActuatorConfig)
    riccati: RiccatiConfig = field(default_factory=RiccatiConfig)
    sim: RunConfig = field(default_factory=RunConfig)
    seed: int = 1234
    output_dir: str = "runs/default"

    def validate(self) -> "SimConfig":
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"schema_version {self.schema_version} unsupported (expected {SCHEMA_VERSION})"
            )
        p, b, s, a, r, run = (
            self.params,
            self.basis,
            self.stationary,
            self.actuator,
            self.riccati,
            self.sim,
        )
        for name, value in (("nu", p.nu), ("l0", p.l0), ("gamma0", p.gamma0)):
            if value <= 0:
                raise ConfigError(f"params.{name} must be positive, got {value}")
        if b.L <= 0:
            raise ConfigError(f"basis.L must be positive, got {b.L}")
        if b.M < 4 or (b.M & (b.M - 1)) != 0:
            raise ConfigError(f"basis.M must be a power of two >= 4, got {b.M}")
        if s.mode not in ("constant", "minimize"):
            raise ConfigError(f"stationary.mode must be 'constant' or 'minimize', got {s.mode!r}")
        if s.mode == "constant" and s.which not in (-1, 0, 1):
            raise ConfigError(f"stationary.which must be -1, 0 or +1, got {s.which}")
        if s.tol <= 0 or s.max_iters <= 0:
            raise ConfigError("stationary.tol and stationary.max_iters must be positive")
        if not (0.0 < a.a < a.b < b.L):
            raise ConfigError(
                f"actuator interval ({a.a}, {a.b}) must satisfy 0 < a < b < L={b.L}"
            )
        if a.T0 <= 0:
            raise ConfigError(f"actuator.T0 must be positive, got {a.T0}")
        if r.method not in ("newton", "integrate"):
            raise ConfigError(f"riccati.method must be 'newton' or 'integrate', got {r.method!r}")
        if r.tol <= 0 or r.max_iters <= 0:
            raise ConfigError("riccati.tol and riccati.max_iters must be positive")
        if run.dt <= 0 or run.t_end <= 0 or run.rho <= 0:
            raise ConfigError("sim.dt, sim.t_end and sim.rho must be positive")
        if run.scheme not in ("imex1", "imex2"):
            raise ConfigError(f"sim.scheme must be 'imex1' or 'imex2', got {run.scheme!r}")
        if run.record_every < 1:
            raise ConfigError(f"sim.record_every must be >= 1, got {run.record_every}")
        return self


_SECTIONS = {
    "params": ParamsConfig,
    "basis": BasisConfig,
    "stationary": StationaryConfig,
    "actuator": ActuatorConfig,
    "riccati": RiccatiConfig,
    "sim": RunConfig,
}


def _from_dict(data: dict) -> SimConfig:
    kwargs = {}
    known = {f.name for f in fields(SimConfig)}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if key in _SECTIONS:
            section_cls = _SECTIONS[key]
            section_known = {f.name for f in fields(section_cls)}
            bad = set(value) - section_known
            if bad:
                raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
            kwargs[key] = section_cls(**value)
        else:
            kwargs[key] = value
    return SimConfig(**kwargs)


def load_config(path: str | Path | None = None, data: dict | None = None) -> SimConfig:
    """Load and validate a config from a JSON file (or an in-memory dict)."""
    if data is None:
        if path is None:
            return SimConfig().validate()
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    return _from_dict(data).validate()


def save_config(cfg: SimConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n")


def apply_override(cfg: SimConfig, dotted: str, raw_value: str) -> SimConfig:
    """Apply one 'section.field=value' style override in place."""
    parts = dotted.split(".")
    target = cfg
    for part in parts[:-1]:
        if not hasattr(target, part) or not is_dataclass(getattr(target, part)):
            raise ConfigError(f"unknown config section {dotted!r}")
        target = getattr(target, part)
    leaf = parts[-1]
    if not hasattr(target, leaf):
        raise ConfigError(f"unknown config field {dotted!r}")
    current = getattr(target, leaf)
    try:
        if isinstance(current, bool):
            value = {"true": True, "false": False}[raw_value.lower()]
        elif isinstance(current, int):
            value = int(raw_value)
        elif isinstance(current, float):
            value = float(raw_value)
        else:
            value = raw_value
    except (ValueError, KeyError):
        raise ConfigError(f"cannot parse {raw_value!r} for {dotted!r} ({type(current).__name__})")
    setattr(target, leaf, value)
    return cfg
