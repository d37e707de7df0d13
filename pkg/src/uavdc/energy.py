"""Rotary-wing propulsion power and the normalized per-period energy cost."""

from __future__ import annotations

import math

from .scenario import RotorParams


def propulsion_power_w(rotor: RotorParams, speed_m_per_s: float) -> float:
    """Blade profile + induced + parasite power at level speed v, in watts."""

    v = float(speed_m_per_s)
    if v < 0:
        raise ValueError(f"speed must be >= 0, got {v}")
    v2 = v * v
    tip2 = rotor.tip_speed_m_per_s ** 2
    blade = rotor.blade_power_w * (1.0 + 3.0 * v2 / tip2)

    v0_2 = rotor.hover_induced_speed_m_per_s ** 2
    # radicand stays >= 0 for all v; clamp kills roundoff wobble only
    radicand = math.sqrt(1.0 + v2 * v2 / (4.0 * v0_2 * v0_2)) - v2 / (2.0 * v0_2)
    induced = rotor.induced_power_w * math.sqrt(max(radicand, 0.0))

    parasite = 0.5 * rotor.fuselage_drag_ratio * rotor.air_density_kg_per_m3 \
        * rotor.rotor_solidity * rotor.rotor_disc_m2 * v2 * v
    return blade + induced + parasite


def hover_power_w(rotor: RotorParams) -> float:
    return propulsion_power_w(rotor, 0.0)


def normalized_step_cost(rotor: RotorParams, speed_m_per_s: float, moving: bool) -> float:
    """Energy units burned per flight period: hovering costs exactly 1, a move
    costs the ratio of cruise power to hover power."""

    if not moving:
        return 1.0
    return propulsion_power_w(rotor, speed_m_per_s) / hover_power_w(rotor)
