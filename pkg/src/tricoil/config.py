"""TOML configuration with strict validation.

Every section is optional; missing keys take the dataclass defaults. Angles
are given in degrees (keys ending ``_deg``) and converted to radians here.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from tricoil.actuation import LibraryConfig, LibraryGrid
from tricoil.coilfield import CoilSpec
from tricoil.mechanism import ClearanceModel, CoilMount, LinkageGeometry, check_monotone, theta_bounds
from tricoil.schedule import RobotParams, SimParams, ThetaSchedule
from tricoil.workspace import FeasibilitySpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LibrarySection:
    thetas_deg: tuple[float, ...] = (35.0, 45.0, 55.0)
    xy_half: float = 0.05
    z_min: float = -0.30
    spacing: float = 0.0025
    fd_step: float | None = None
    map_r_max: float = 0.25
    map_z_half: float = 0.30
    map_spacing: float = 1.5e-3


@dataclass(frozen=True)
class ScheduleSection:
    breakpoints: tuple[float, ...] = (0.035, 0.045)
    thetas_deg: tuple[float, ...] = (35.0, 45.0, 55.0)
    hysteresis: float = 0.0


@dataclass(frozen=True)
class ToolConfig:
    coil: CoilSpec = field(default_factory=CoilSpec)
    linkage: LinkageGeometry = field(default_factory=LinkageGeometry)
    clearance: ClearanceModel = field(default_factory=ClearanceModel)
    mount: CoilMount = field(default_factory=CoilMount)
    library: LibrarySection = field(default_factory=LibrarySection)
    feasibility: FeasibilitySpec = field(default_factory=FeasibilitySpec)
    robot: RobotParams = field(default_factory=RobotParams)
    simulation: SimParams = field(default_factory=SimParams)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    paths: dict = field(default_factory=dict)

    def library_config(self) -> LibraryConfig:
        lib = self.library
        return LibraryConfig(
            coil=self.coil, mount=self.mount, clearance=self.clearance,
            grid=LibraryGrid(lib.xy_half, lib.z_min, lib.spacing),
            thetas_deg=tuple(lib.thetas_deg), fd_step=lib.fd_step,
            map_r_max=lib.map_r_max, map_z_half=lib.map_z_half, map_spacing=lib.map_spacing,
        )

    def theta_schedule(self) -> ThetaSchedule:
        s = self.schedule
        return ThetaSchedule(tuple(s.breakpoints), tuple(math.radians(t) for t in s.thetas_deg), s.hysteresis)


_SECTIONS = {
    "coil": CoilSpec,
    "linkage": LinkageGeometry,
    "mount": CoilMount,
    "library": LibrarySection,
    "feasibility": FeasibilitySpec,
    "robot": RobotParams,
    "simulation": SimParams,
    "schedule": ScheduleSection,
}


def _build(section: str, cls, raw: dict, renames: dict | None = None):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{section}] must be a table")
    renames = renames or {}
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        if key in renames:
            target, convert = renames[key]
            value = convert(value)
        else:
            target = key
            if isinstance(value, list):
                value = tuple(value)
        if target not in names or (target != key and key in names):
            raise ConfigError(f"unknown key '{section}.{key}'")
        kwargs[target] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def config_from_dict(data: dict) -> ToolConfig:
    known = set(_SECTIONS) | {"clearance", "paths"}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown section '{key}'")
    parts = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            renames = None
            if name == "linkage":
                renames = {"alpha_deg": ("alpha", math.radians)}
            parts[name] = _build(name, cls, data[name], renames)
    if "clearance" in data:
        parts["clearance"] = _build("clearance", ClearanceModel, data["clearance"],
                                    {"theta_ref_deg": ("theta_ref", math.radians)})
    if "paths" in data:
        if not isinstance(data["paths"], dict):
            raise ConfigError("[paths] must be a table")
        parts["paths"] = dict(data["paths"])
    cfg = ToolConfig(**parts)
    validate(cfg)
    return cfg


def validate(cfg: ToolConfig) -> None:
    try:
        check_monotone(cfg.linkage)
    except ValueError as exc:
        raise ConfigError(f"linkage: {exc}") from None
    lo, hi = theta_bounds(cfg.linkage)
    for name, thetas in (("library.thetas_deg", cfg.library.thetas_deg),
                         ("schedule.thetas_deg", cfg.schedule.thetas_deg)):
        for t in thetas:
            if not lo - 1e-12 <= math.radians(t) <= hi + 1e-12:
                raise ConfigError(
                    f"{name}: theta={t:g} deg unreachable; mechanism range is "
                    f"[{math.degrees(lo):.3f}, {math.degrees(hi):.3f}] deg")
    if len(set(cfg.library.thetas_deg)) != len(cfg.library.thetas_deg):
        raise ConfigError("library.thetas_deg has duplicates")
    missing = [t for t in cfg.schedule.thetas_deg if t not in cfg.library.thetas_deg]
    if missing:
        raise ConfigError(f"schedule.thetas_deg {missing} not in library.thetas_deg")
    try:
        cfg.theta_schedule()
    except ValueError as exc:
        raise ConfigError(f"schedule: {exc}") from None


def load_config(path) -> ToolConfig:
    """Parse and validate a TOML config file."""
    text = Path(path).read_text()
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)


def default_config() -> ToolConfig:
    cfg = ToolConfig()
    validate(cfg)
    return cfg
