"""Scenario model: grid geometry, zone masks, IoT nodes, jammers, physics.

A scenario is a declarative YAML file (or a shipped builtin) describing one
square grid world. Cells are addressed as (x, y), 0-based, x east, y north.
All physical quantities carry their unit in the field name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

ZONE_KINDS = ("no_fly", "comm_obstacle", "start_land", "combined")
BUILTIN_SCENARIOS = ("scenario1", "scenario2", "scenario3")


class ScenarioParseError(ValueError):
    """Malformed scenario document."""


class ScenarioValidationError(ValueError):
    """Well-formed document that violates a scenario invariant."""


@dataclass
class GridSpec:
    y_cells: int
    cell_len_m: float


@dataclass
class RotorParams:
    """Rotary-wing propulsion constants."""

    blade_power_w: float = 79.85
    induced_power_w: float = 88.62
    tip_speed_m_per_s: float = 120.0
    hover_induced_speed_m_per_s: float = 4.03
    fuselage_drag_ratio: float = 0.6
    air_density_kg_per_m3: float = 1.225
    rotor_solidity: float = 0.05
    rotor_disc_m2: float = 0.503


@dataclass
class PhysicsParams:
    alpha_los_db: float = 2.27
    alpha_nlos_db: float = 3.64
    shadow_var_los_db2: float = 2.0
    shadow_var_nlos_db2: float = 5.0
    noise_psd_w_per_hz: float = 1.0e-17
    total_bw_hz: float = 5.0e5
    rate_threshold_mb: float = 0.001
    altitude_m: float = 30.0
    speed_m_per_s: float = 20.0
    comm_slots_per_period: int = 4
    energy_budget: float = 90.0
    rotor: RotorParams = field(default_factory=RotorParams)


@dataclass
class ZoneMask:
    kind: str
    cells: list[tuple[int, int]]


@dataclass
class IoTNodeCfg:
    cell: tuple[int, int]
    init_data_mb: float = 50.0
    capacity_mb: float = 65.0
    growth_mb: float = 0.2
    tx_power_w: float = 0.1


@dataclass
class JammerCfg:
    cell: tuple[int, int]
    power_choices_w: list[float] = field(default_factory=lambda: [10.0, 20.0, 30.0, 40.0, 50.0])
    beam_choices_rad: list[float] = field(default_factory=lambda: [math.radians(d) for d in (30.0, 60.0, 90.0)])
    iso_gain: float = 1.0


@dataclass
class JammerDraw:
    """Per-episode realization of one jammer."""

    cell: tuple[int, int]
    power_w: float
    beam_rad: float
    iso_gain: float


@dataclass
class ScenarioConfig:
    name: str
    grid: GridSpec
    physics: PhysicsParams
    zones: list[ZoneMask]
    nodes: list[IoTNodeCfg]
    jammers: list[JammerCfg]


def _as_cell(raw, where: str) -> tuple[int, int]:
    try:
        x, y = raw
        cx, cy = int(x), int(y)
    except (TypeError, ValueError) as exc:
        raise ScenarioParseError(f"{where}: expected a [x, y] cell, got {raw!r}") from exc
    if cx != float(x) or cy != float(y):
        raise ScenarioParseError(f"{where}: cell coordinates must be integers, got {raw!r}")
    return cx, cy


def _as_float(raw, where: str) -> float:
    try:
        return float(raw)
    except (TypeError, ValueError) as exc:
        raise ScenarioParseError(f"{where}: expected a number, got {raw!r}") from exc


def _as_int(raw, where: str) -> int:
    val = _as_float(raw, where)
    if val != int(val):
        raise ScenarioParseError(f"{where}: expected an integer, got {raw!r}")
    return int(val)


def _take(mapping, key, where, required=True, default=None):
    if key not in mapping:
        if required:
            raise ScenarioParseError(f"{where}: missing required key '{key}'")
        return default
    return mapping[key]


_ROTOR_FIELDS = (
    ("blade_power_w", "blade_power_w"),
    ("induced_power_w", "induced_power_w"),
    ("tip_speed_m_per_s", "tip_speed_m_per_s"),
    ("hover_induced_speed_m_per_s", "hover_induced_speed_m_per_s"),
    ("fuselage_drag_ratio", "fuselage_drag_ratio"),
    ("air_density_kg_per_m3", "air_density_kg_per_m3"),
    ("rotor_solidity", "rotor_solidity"),
    ("rotor_disc_m2", "rotor_disc_m2"),
)

_PHYSICS_FLOAT_FIELDS = (
    "alpha_los_db",
    "alpha_nlos_db",
    "shadow_var_los_db2",
    "shadow_var_nlos_db2",
    "noise_psd_w_per_hz",
    "total_bw_hz",
    "rate_threshold_mb",
    "altitude_m",
    "speed_m_per_s",
    "energy_budget",
)


def from_dict(doc: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from a parsed document, with type coercion."""

    if not isinstance(doc, dict):
        raise ScenarioParseError(f"scenario document must be a mapping, got {type(doc).__name__}")

    name = str(_take(doc, "name", "scenario", required=False, default="unnamed"))

    graw = _take(doc, "grid", "scenario")
    grid = GridSpec(
        y_cells=_as_int(_take(graw, "y_cells", "grid"), "grid.y_cells"),
        cell_len_m=_as_float(_take(graw, "cell_len_m", "grid"), "grid.cell_len_m"),
    )

    praw = dict(_take(doc, "physics", "scenario"))
    rraw = dict(praw.pop("rotor", {}))
    rotor = RotorParams(**{f: _as_float(_take(rraw, k, "physics.rotor", required=False,
                                              default=getattr(RotorParams(), f)), f"physics.rotor.{k}")
                           for f, k in _ROTOR_FIELDS})
    pkw = {}
    for f in _PHYSICS_FLOAT_FIELDS:
        pkw[f] = _as_float(_take(praw, f, "physics", required=False,
                                 default=getattr(PhysicsParams(), f)), f"physics.{f}")
    pkw["comm_slots_per_period"] = _as_int(
        _take(praw, "comm_slots_per_period", "physics", required=False,
              default=PhysicsParams().comm_slots_per_period), "physics.comm_slots_per_period")
    physics = PhysicsParams(rotor=rotor, **pkw)

    zones = []
    for zi, zraw in enumerate(_take(doc, "zones", "scenario", required=False, default=[]) or []):
        kind = str(_take(zraw, "kind", f"zones[{zi}]"))
        cells = [_as_cell(c, f"zones[{zi}].cells[{ci}]")
                 for ci, c in enumerate(_take(zraw, "cells", f"zones[{zi}]"))]
        seen, uniq = set(), []
        for c in cells:
            if c not in seen:
                seen.add(c)
                uniq.append(c)
        zones.append(ZoneMask(kind=kind, cells=uniq))

    nodes = []
    for ni, nraw in enumerate(_take(doc, "nodes", "scenario")):
        w = f"nodes[{ni}]"
        nodes.append(IoTNodeCfg(
            cell=_as_cell(_take(nraw, "cell", w), f"{w}.cell"),
            init_data_mb=_as_float(_take(nraw, "init_data_mb", w, required=False, default=50.0), f"{w}.init_data_mb"),
            capacity_mb=_as_float(_take(nraw, "capacity_mb", w, required=False, default=65.0), f"{w}.capacity_mb"),
            growth_mb=_as_float(_take(nraw, "growth_mb", w, required=False, default=0.2), f"{w}.growth_mb"),
            tx_power_w=_as_float(_take(nraw, "tx_power_w", w, required=False, default=0.1), f"{w}.tx_power_w"),
        ))

    jammers = []
    for ji, jraw in enumerate(_take(doc, "jammers", "scenario", required=False, default=[]) or []):
        w = f"jammers[{ji}]"
        if "beam_choices_rad" in jraw:
            beams = [_as_float(b, f"{w}.beam_choices_rad") for b in jraw["beam_choices_rad"]]
        elif "beam_choices_deg" in jraw:
            beams = [math.radians(_as_float(b, f"{w}.beam_choices_deg")) for b in jraw["beam_choices_deg"]]
        else:
            beams = list(JammerCfg(cell=(0, 0)).beam_choices_rad)
        jammers.append(JammerCfg(
            cell=_as_cell(_take(jraw, "cell", w), f"{w}.cell"),
            power_choices_w=[_as_float(p, f"{w}.power_choices_w")
                             for p in _take(jraw, "power_choices_w", w, required=False,
                                            default=JammerCfg(cell=(0, 0)).power_choices_w)],
            beam_choices_rad=beams,
            iso_gain=_as_float(_take(jraw, "iso_gain", w, required=False, default=1.0), f"{w}.iso_gain"),
        ))

    cfg = ScenarioConfig(name=name, grid=grid, physics=physics, zones=zones, nodes=nodes, jammers=jammers)
    validate(cfg)
    return cfg


def to_dict(cfg: ScenarioConfig) -> dict:
    r = cfg.physics.rotor
    return {
        "name": cfg.name,
        "grid": {"y_cells": cfg.grid.y_cells, "cell_len_m": cfg.grid.cell_len_m},
        "physics": {
            **{f: getattr(cfg.physics, f) for f in _PHYSICS_FLOAT_FIELDS},
            "comm_slots_per_period": cfg.physics.comm_slots_per_period,
            "rotor": {k: getattr(r, f) for f, k in _ROTOR_FIELDS},
        },
        "zones": [{"kind": z.kind, "cells": [list(c) for c in z.cells]} for z in cfg.zones],
        "nodes": [{"cell": list(n.cell), "init_data_mb": n.init_data_mb, "capacity_mb": n.capacity_mb,
                   "growth_mb": n.growth_mb, "tx_power_w": n.tx_power_w} for n in cfg.nodes],
        "jammers": [{"cell": list(j.cell), "power_choices_w": list(j.power_choices_w),
                     "beam_choices_rad": list(j.beam_choices_rad), "iso_gain": j.iso_gain}
                    for j in cfg.jammers],
    }


def serialize(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def loads(text: str) -> ScenarioConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioParseError(f"invalid YAML: {exc}") from exc
    return from_dict(doc)


def load_scenario(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())


def builtin(name: str) -> ScenarioConfig:
    if name not in BUILTIN_SCENARIOS:
        raise ScenarioParseError(f"unknown builtin scenario '{name}' (have: {', '.join(BUILTIN_SCENARIOS)})")
    text = resources.files("uavdc").joinpath(f"data/{name}.yaml").read_text(encoding="utf-8")
    return loads(text)


def in_bounds(cfg: ScenarioConfig, cell) -> bool:
    y = cfg.grid.y_cells
    return 0 <= cell[0] < y and 0 <= cell[1] < y


def zone_mask(cfg: ScenarioConfig, kinds) -> np.ndarray:
    """Boolean (Y, Y) array, indexed [x, y], true where any zone of the given kinds sits."""

    mask = np.zeros((cfg.grid.y_cells, cfg.grid.y_cells), dtype=bool)
    for z in cfg.zones:
        if z.kind in kinds:
            for (x, y) in z.cells:
                mask[x, y] = True
    return mask


def flight_blocked_mask(cfg: ScenarioConfig) -> np.ndarray:
    return zone_mask(cfg, ("no_fly", "combined"))


def comm_blocked_mask(cfg: ScenarioConfig) -> np.ndarray:
    return zone_mask(cfg, ("comm_obstacle", "combined"))


def start_land_mask(cfg: ScenarioConfig) -> np.ndarray:
    return zone_mask(cfg, ("start_land",))


def start_land_cells(cfg: ScenarioConfig) -> list[tuple[int, int]]:
    for z in cfg.zones:
        if z.kind == "start_land":
            return list(z.cells)
    return []


def return_distance_cells(cfg: ScenarioConfig) -> np.ndarray:
    """Chebyshev distance (in cells) from every cell to the nearest start/land cell."""

    y = cfg.grid.y_cells
    starts = start_land_cells(cfg)
    xs = np.arange(y)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    dist = np.full((y, y), np.iinfo(np.int64).max, dtype=np.int64)
    for (sx, sy) in starts:
        dist = np.minimum(dist, np.maximum(np.abs(gx - sx), np.abs(gy - sy)))
    return dist


def validate(cfg: ScenarioConfig) -> None:
    if cfg.grid.y_cells < 4:
        raise ScenarioValidationError(f"grid.y_cells: must be >= 4, got {cfg.grid.y_cells}")
    if cfg.grid.cell_len_m <= 0:
        raise ScenarioValidationError(f"grid.cell_len_m: must be > 0, got {cfg.grid.cell_len_m}")

    p = cfg.physics
    for f in ("noise_psd_w_per_hz", "total_bw_hz", "altitude_m", "speed_m_per_s", "energy_budget"):
        if getattr(p, f) <= 0:
            raise ScenarioValidationError(f"physics.{f}: must be > 0, got {getattr(p, f)}")
    if p.rate_threshold_mb < 0:
        raise ScenarioValidationError(f"physics.rate_threshold_mb: must be >= 0, got {p.rate_threshold_mb}")
    if p.comm_slots_per_period < 1:
        raise ScenarioValidationError(
            f"physics.comm_slots_per_period: must be >= 1, got {p.comm_slots_per_period}")
    for f, _ in _ROTOR_FIELDS:
        if getattr(p.rotor, f) <= 0:
            raise ScenarioValidationError(f"physics.rotor.{f}: must be > 0, got {getattr(p.rotor, f)}")

    for z in cfg.zones:
        if z.kind not in ZONE_KINDS:
            raise ScenarioValidationError(f"zones: unknown kind '{z.kind}' (have: {', '.join(ZONE_KINDS)})")
        for c in z.cells:
            if not in_bounds(cfg, c):
                raise ScenarioValidationError(f"zones({z.kind}): cell {c} out of the {cfg.grid.y_cells}^2 grid")

    starts = [z for z in cfg.zones if z.kind == "start_land"]
    if len(starts) != 1 or not starts[0].cells:
        raise ScenarioValidationError(
            f"zones: expected exactly one non-empty start_land zone, got {len(starts)}")

    blocked = flight_blocked_mask(cfg)
    for (x, y) in starts[0].cells:
        if blocked[x, y]:
            raise ScenarioValidationError(f"zones(start_land): cell ({x}, {y}) is also flight-blocked")

    if not cfg.nodes:
        raise ScenarioValidationError("nodes: at least one IoT node is required")
    for i, n in enumerate(cfg.nodes):
        w = f"nodes[{i}]"
        if not in_bounds(cfg, n.cell):
            raise ScenarioValidationError(f"{w}.cell: {n.cell} out of the grid")
        if blocked[n.cell]:
            raise ScenarioValidationError(f"{w}.cell: {n.cell} lies in a no-fly or combined zone")
        if n.capacity_mb <= 0:
            raise ScenarioValidationError(f"{w}.capacity_mb: must be > 0, got {n.capacity_mb}")
        if not 0 <= n.init_data_mb <= n.capacity_mb:
            raise ScenarioValidationError(
                f"{w}.init_data_mb: must be in [0, capacity], got {n.init_data_mb}")
        if n.growth_mb < 0:
            raise ScenarioValidationError(f"{w}.growth_mb: must be >= 0, got {n.growth_mb}")
        if n.tx_power_w <= 0:
            raise ScenarioValidationError(f"{w}.tx_power_w: must be > 0, got {n.tx_power_w}")

    for i, j in enumerate(cfg.jammers):
        w = f"jammers[{i}]"
        if not in_bounds(cfg, j.cell):
            raise ScenarioValidationError(f"{w}.cell: {j.cell} out of the grid")
        if blocked[j.cell]:
            raise ScenarioValidationError(f"{w}.cell: {j.cell} lies in a no-fly or combined zone")
        if not j.power_choices_w or not j.beam_choices_rad:
            raise ScenarioValidationError(f"{w}: power and beam choice lists must be non-empty")
        if any(pw <= 0 for pw in j.power_choices_w):
            raise ScenarioValidationError(f"{w}.power_choices_w: all powers must be > 0")
        if any(not 0 < b < math.pi for b in j.beam_choices_rad):
            raise ScenarioValidationError(f"{w}.beam_choices_rad: beams must lie in (0, pi)")
        if j.iso_gain <= 0:
            raise ScenarioValidationError(f"{w}.iso_gain: must be > 0, got {j.iso_gain}")


def sample_jammer_episode(cfg: ScenarioConfig, rng: np.random.Generator) -> list[JammerDraw]:
    """Draw one per-episode (power, beamwidth) realization for every jammer.

    Power and beamwidth are each uniform over their choice lists and fixed
    for the whole episode.
    """

    draws = []
    for j in cfg.jammers:
        p = j.power_choices_w[int(rng.integers(len(j.power_choices_w)))]
        b = j.beam_choices_rad[int(rng.integers(len(j.beam_choices_rad)))]
        draws.append(JammerDraw(cell=j.cell, power_w=p, beam_rad=b, iso_gain=j.iso_gain))
    return draws
