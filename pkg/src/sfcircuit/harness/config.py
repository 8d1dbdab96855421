"""Experiment configuration: an INI file with one section per concern.

Example::

    [geometry]
    R = 4.5
    l = 2.0
    d = 0.6

    [solver]
    T = 24
    sample_every = 50

    [protocol]
    V_over_Vc = 0.02
    snapshot_times = 2.5

    [sweep]
    V_over_Vc = linspace(0, 0.1, 11)

List values are comma separated or ``linspace(start, stop, num)``.  Keys
not listed in ``SCHEMA`` are rejected; omitted keys take their defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np

from ..circuit import CircuitParams
from ..geometry import Grid2D, InteractionParams, TrapGeometry
from ..gpe import SolverParams


class ConfigError(ValueError):
    pass


REGIONS = ("right_and_channel", "all")


@dataclass(frozen=True)
class ProtocolConfig:
    V_over_Vc: float = 0.0
    snapshot_times: tuple[float, ...] = (2.5,)

    def __post_init__(self):
        if not 0 <= self.V_over_Vc <= 1:
            raise ConfigError(f"V_over_Vc must lie in [0, 1], got {self.V_over_Vc}")
        if any(t < 0 for t in self.snapshot_times):
            raise ConfigError("snapshot times must be non-negative")


@dataclass(frozen=True)
class AnalysisConfig:
    density_floor: float = 0.05
    region: str = "right_and_channel"
    stable_rel_tol: float = 0.02
    window_start: float | None = None
    window_end: float | None = None

    def __post_init__(self):
        if not 0 <= self.density_floor < 1:
            raise ConfigError("density_floor must lie in [0, 1)")
        if self.region not in REGIONS:
            raise ConfigError(f"region must be one of {REGIONS}, got {self.region!r}")
        if (self.window_start is None) != (self.window_end is None):
            raise ConfigError("window_start and window_end must be given together")
        if self.window_start is not None and self.window_end <= self.window_start:
            raise ConfigError("window_end must exceed window_start")

    @property
    def window(self) -> tuple[float, float] | None:
        if self.window_start is None:
            return None
        return (self.window_start, self.window_end)


@dataclass(frozen=True)
class SweepConfig:
    V_over_Vc: tuple[float, ...] = ()
    l: tuple[float, ...] = ()
    d: tuple[float, ...] = ()
    inner_V_over_Vc: tuple[float, ...] = tuple(np.linspace(0.01, 0.1, 6).tolist())

    def __post_init__(self):
        for name in ("V_over_Vc", "inner_V_over_Vc"):
            vals = getattr(self, name)
            if any(not 0 <= v <= 1 for v in vals):
                raise ConfigError(f"sweep {name} values must lie in [0, 1]")
        for name in ("V_over_Vc", "l", "d"):
            vals = getattr(self, name)
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ConfigError(f"sweep {name} must be strictly increasing")


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "runs"
    workers: int = 1

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: TrapGeometry = field(default_factory=TrapGeometry)
    grid: Grid2D = field(default_factory=Grid2D)
    physics: InteractionParams = field(default_factory=InteractionParams)
    solver: SolverParams = field(default_factory=lambda: SolverParams(T=20.0))
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    circuit: CircuitParams | None = None
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def with_bias(self, V_over_Vc: float) -> "ExperimentConfig":
        return replace(self, protocol=replace(self.protocol, V_over_Vc=float(V_over_Vc)))

    def with_geometry(self, **kw) -> "ExperimentConfig":
        return replace(self, geometry=replace(self.geometry, **kw))

    def physics_hash(self) -> str:
        """Hash of everything that affects a run's numbers (not output/sweep)."""
        text = dumps(replace(self, output=OutputConfig(), sweep=SweepConfig()))
        return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------- parsing

def _parse_float_list(text: str) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    if text.startswith("linspace(") and text.endswith(")"):
        parts = [p.strip() for p in text[len("linspace("):-1].split(",")]
        if len(parts) != 3:
            raise ConfigError(f"linspace needs 3 arguments: {text!r}")
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
        return tuple(float(v) for v in np.linspace(a, b, n))
    return tuple(float(p) for p in text.split(",") if p.strip())


def _opt_float(text: str) -> float | None:
    text = text.strip()
    return None if text.lower() in ("", "none") else float(text)


def _fmt(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


Converter = Callable[[str], Any]

SCHEMA: dict[str, tuple[type, dict[str, Converter]]] = {
    "geometry": (TrapGeometry, {"R": float, "l": float, "d": float, "wall_height": float}),
    "grid": (Grid2D, {"nx": int, "ny": int, "dx": float, "dy": float}),
    "physics": (InteractionParams, {"g": float, "N": float}),
    "solver": (SolverParams, {"dt": float, "dtau": float, "T": float, "sample_every": int,
                              "gs_energy_tol": float, "max_gs_iters": int,
                              "gs_check_every": int}),
    "protocol": (ProtocolConfig, {"V_over_Vc": float, "snapshot_times": _parse_float_list}),
    "analysis": (AnalysisConfig, {"density_floor": float, "region": str,
                                  "stable_rel_tol": float, "window_start": _opt_float,
                                  "window_end": _opt_float}),
    "circuit": (CircuitParams, {"omega": float, "I_c": float, "D_s": float}),
    "sweep": (SweepConfig, {"V_over_Vc": _parse_float_list, "l": _parse_float_list,
                            "d": _parse_float_list, "inner_V_over_Vc": _parse_float_list}),
    "output": (OutputConfig, {"dir": str, "workers": int}),
}


def loads(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case sensitive
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    defaults = ExperimentConfig()
    sections: dict[str, Any] = {}
    for name in parser.sections():
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        cls, keys = SCHEMA[name]
        values = {}
        for key, raw in parser.items(name):
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{name}]")
            try:
                values[key] = keys[key](raw)
            except ValueError as exc:
                raise ConfigError(f"[{name}] {key} = {raw!r}: {exc}") from exc
        try:
            if name == "circuit":
                missing = set(keys) - set(values)
                if missing:
                    raise ConfigError(f"[circuit] needs all of omega, I_c, D_s; missing {sorted(missing)}")
                sections[name] = cls(**values)
            else:
                sections[name] = replace(getattr(defaults, name), **values)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"[{name}]: {exc}") from exc
    cfg = replace(defaults, **sections)
    validate(cfg)
    return cfg


def load(path: str | Path) -> ExperimentConfig:
    return loads(Path(path).read_text())


def validate(cfg: ExperimentConfig) -> None:
    """Cross-section checks that no single section can make on its own."""
    try:
        cfg.solver.check_stability(cfg.grid)
        Grid2D.enclosing(cfg.geometry, cfg.grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def dumps(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for name, (_, keys) in SCHEMA.items():
        section = getattr(cfg, name)
        if section is None:
            continue
        parser[name] = {k: _fmt(getattr(section, k)) for k in keys}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def dump(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(dumps(cfg))


def as_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)
