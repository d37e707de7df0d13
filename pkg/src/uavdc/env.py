"""Grid-world episode dynamics for UAV data collection under jamming.

One episode runs in flight periods. Each period the UAV executes one flight
action (move/hover/land), then serves the ground nodes over a fixed number of
short communication slots with a bandwidth split chosen per slot. Energy is
budgeted in hover-cost units; jammer power and beamwidth are drawn once per
episode. Rewards follow the shaped scheme: collection pays; data loss,
collisions, late return and battery exhaustion charge penalties.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import channel, energy
from .channel import RobustParams
from .scenario import (GridSpec, PhysicsParams, ScenarioConfig,
                       comm_blocked_mask, flight_blocked_mask,
                       return_distance_cells, sample_jammer_episode,
                       start_land_cells, start_land_mask)


class FlightAction(enum.IntEnum):
    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3
    HOVER = 4
    LAND = 5


MOVE_DELTAS = {
    FlightAction.NORTH: (0, 1),
    FlightAction.EAST: (1, 0),
    FlightAction.SOUTH: (0, -1),
    FlightAction.WEST: (-1, 0),
}

N_FLIGHT_ACTIONS = len(FlightAction)


@dataclass
class RewardParams:
    collection_weight: float = 1.5
    data_loss: float = -1.0
    collision: float = -7.0
    return_level: float = 10.0
    energy_threshold: float = 10.0
    not_landed_per_cell: float = -10.0
    not_landed_flat: float = -100.0


@dataclass
class EnvState:
    uav_cell: tuple[int, int]
    energy: float
    node_data: np.ndarray
    period_idx: int = 0
    slot_idx: int = 0
    landed: bool = False
    crashed: bool = False
    truncated: bool = False
    return_charged: bool = False
    jammers: list = field(default_factory=list)


@dataclass
class FlightReport:
    action: int
    reward: float
    collision: bool
    moved: bool
    landed: bool
    crashed: bool
    collision_penalty: float
    return_penalty: float
    not_landed_penalty: float
    energy_spent: float
    energy_after: float
    cell_after: tuple[int, int]


@dataclass
class StepReport:
    period_idx: int
    slot_idx: int
    reward: float
    fractions: np.ndarray
    rates_bps: np.ndarray
    collected_mb: np.ndarray
    lost_mb: np.ndarray
    data_loss: bool


@dataclass
class OptionReport:
    flight: FlightReport
    slots: list
    reward: float


@dataclass
class EpisodeMetrics:
    reward: float = 0.0
    collected_mb: float = 0.0
    lost_mb: float = 0.0
    collisions: int = 0
    periods: int = 0
    energy_spent: float = 0.0
    landed: bool = False
    crashed: bool = False


def comm_slot_seconds(grid: GridSpec, phys: PhysicsParams) -> float:
    """Slot duration: one cell transit time split across the period's slots."""

    return (grid.cell_len_m / phys.speed_m_per_s) / phys.comm_slots_per_period


def collection_clamp(volume_mb: float, threshold_mb: float, remaining_mb: float) -> float:
    """Data actually drained from one node in one slot.

    Below the volume threshold nothing is decodable; otherwise the slot's
    volume is served, capped by what the node still holds.
    """

    if volume_mb < threshold_mb:
        return 0.0
    if volume_mb <= remaining_mb:
        return volume_mb
    return remaining_mb


def episode_metrics(options) -> EpisodeMetrics:
    """Aggregate totals over a list of OptionReports; empty history is all zero."""

    m = EpisodeMetrics()
    for opt in options:
        m.reward += opt.reward
        m.periods += 1
        m.collisions += int(opt.flight.collision)
        m.energy_spent += opt.flight.energy_spent
        m.landed = opt.flight.landed
        m.crashed = opt.flight.crashed
        for rep in opt.slots:
            m.collected_mb += float(np.sum(rep.collected_mb))
            m.lost_mb += float(np.sum(rep.lost_mb))
    return m


class DataCollectionEnv:
    """Mutable episode engine over one ScenarioConfig.

    Channel geometry that never changes (distances, line of sight, dB base
    loss) is tabulated once per construction; per-episode jammer realizations
    are drawn in reset(). All randomness flows through the reset-seeded
    generator so a (config, seed, action sequence) triple replays exactly.
    """

    def __init__(self, cfg: ScenarioConfig, rewards: RewardParams | None = None,
                 fading: bool = True, robust: RobustParams | None = None,
                 max_periods: int = 200, return_penalty_recurs: bool = True):
        if max_periods < 1:
            raise ValueError("max_periods must be >= 1")
        self.cfg = cfg
        self.rewards = rewards or RewardParams()
        self.fading = fading
        self.robust = robust
        self.max_periods = max_periods
        self.return_penalty_recurs = return_penalty_recurs

        p = cfg.physics
        self.n_slots = p.comm_slots_per_period
        self.slot_seconds = comm_slot_seconds(cfg.grid, p)
        self.move_cost = energy.normalized_step_cost(p.rotor, p.speed_m_per_s, moving=True)
        self.hover_cost = energy.normalized_step_cost(p.rotor, p.speed_m_per_s, moving=False)

        self._flight_blocked = flight_blocked_mask(cfg)
        self._comm_blocked = comm_blocked_mask(cfg)
        self._start_mask = start_land_mask(cfg)
        self._start_cell = start_land_cells(cfg)[0]
        self._d_re = return_distance_cells(cfg)

        self._tx = np.array([n.tx_power_w for n in cfg.nodes])
        self._growth = np.array([n.growth_mb for n in cfg.nodes])
        self._cap = np.array([n.capacity_mb for n in cfg.nodes])
        self._init_data = np.array([n.init_data_mb for n in cfg.nodes])

        self._tabulate_links()
        self.state: EnvState | None = None
        self._rng: np.random.Generator | None = None

    def _tabulate_links(self):
        cfg = self.cfg
        y = cfg.grid.y_cells
        clen = cfg.grid.cell_len_m
        alt = cfg.physics.altitude_m
        node_cells = [n.cell for n in cfg.nodes]
        jam_cells = [j.cell for j in cfg.jammers]

        def tables(targets):
            k = len(targets)
            horiz = np.zeros((y, y, k))
            dist = np.zeros((y, y, k))
            los = np.zeros((y, y, k), dtype=bool)
            xs = np.arange(y)
            gx, gy = np.meshgrid(xs, xs, indexing="ij")
            for t, (tx, ty) in enumerate(targets):
                h = np.hypot(gx - tx, gy - ty) * clen
                horiz[:, :, t] = h
                dist[:, :, t] = np.hypot(h, alt)
                for x in range(y):
                    for yy in range(y):
                        los[x, yy, t] = channel.is_los((x, yy), (tx, ty), self._comm_blocked)
            return horiz, dist, los

        p = cfg.physics
        self._horiz_node, self._dist_node, self._los_node = tables(node_cells)
        self._horiz_jam, self._dist_jam, self._los_jam = tables(jam_cells)
        self._base_loss_node = np.where(self._los_node, p.alpha_los_db, p.alpha_nlos_db) \
            * np.log10(self._dist_node) if node_cells else np.zeros((y, y, 0))
        self._base_loss_jam = np.where(self._los_jam, p.alpha_los_db, p.alpha_nlos_db) \
            * np.log10(self._dist_jam) if jam_cells else np.zeros((y, y, 0))
        self._sigma_node = np.sqrt(np.where(self._los_node, p.shadow_var_los_db2, p.shadow_var_nlos_db2))
        self._sigma_jam = np.sqrt(np.where(self._los_jam, p.shadow_var_los_db2, p.shadow_var_nlos_db2))

    # -- episode control -------------------------------------------------

    def reset(self, seed) -> EnvState:
        self._rng = np.random.default_rng(seed)
        draws = sample_jammer_episode(self.cfg, self._rng)
        self._jam_power = np.array([d.power_w for d in draws])
        self._jam_gain = np.array([channel.jammer_gain(d.beam_rad, 0.0, self.cfg.physics.altitude_m,
                                                       d.iso_gain) for d in draws])
        radius = np.array([channel.cone_radius_m(d.beam_rad, self.cfg.physics.altitude_m)
                           for d in draws])
        self._in_cone = self._horiz_jam <= radius[None, None, :] if draws else \
            np.zeros_like(self._horiz_jam, dtype=bool)
        self.state = EnvState(
            uav_cell=self._start_cell,
            energy=self.cfg.physics.energy_budget,
            node_data=self._init_data.copy(),
            jammers=draws,
        )
        return self.state

    @property
    def terminal(self) -> bool:
        st = self.state
        return st.landed or st.crashed or st.truncated

    def step_flight(self, action) -> FlightReport:
        st = self.state
        if st is None:
            raise RuntimeError("reset() before stepping")
        if self.terminal or st.period_idx >= self.max_periods:
            raise RuntimeError("stepping a terminal episode")
        action = FlightAction(int(action))

        collision = False
        moved = False
        if action == FlightAction.LAND:
            if self._start_mask[st.uav_cell]:
                st.landed = True
            cost = self.hover_cost
        elif action == FlightAction.HOVER:
            cost = self.hover_cost
        else:
            dx, dy = MOVE_DELTAS[action]
            tx, ty = st.uav_cell[0] + dx, st.uav_cell[1] + dy
            y = self.cfg.grid.y_cells
            if not (0 <= tx < y and 0 <= ty < y) or self._flight_blocked[tx, ty]:
                collision = True
                cost = self.hover_cost
            else:
                st.uav_cell = (tx, ty)
                moved = True
                cost = self.move_cost
        st.energy -= cost
        st.period_idx += 1
        st.slot_idx = 0

        rw = self.rewards
        d_re = int(self._d_re[st.uav_cell])
        collision_penalty = rw.collision if collision else 0.0

        return_penalty = 0.0
        if st.energy <= rw.energy_threshold and not st.landed:
            if self.return_penalty_recurs or not st.return_charged:
                return_penalty = -d_re * (rw.return_level - st.energy)
                st.return_charged = True

        not_landed_penalty = 0.0
        if st.energy <= 0.0 and not st.landed:
            not_landed_penalty = rw.not_landed_per_cell * d_re + rw.not_landed_flat
            st.crashed = True

        reward = collision_penalty + return_penalty + not_landed_penalty
        return FlightReport(
            action=int(action), reward=reward, collision=collision, moved=moved,
            landed=st.landed, crashed=st.crashed,
            collision_penalty=collision_penalty, return_penalty=return_penalty,
            not_landed_penalty=not_landed_penalty, energy_spent=cost,
            energy_after=st.energy, cell_after=st.uav_cell,
        )

    def step_comm(self, fractions) -> StepReport:
        st = self.state
        if st is None:
            raise RuntimeError("reset() before stepping")
        if st.landed or st.crashed or st.truncated:
            raise RuntimeError("comm slot on a terminal episode")
        if st.period_idx == 0:
            raise RuntimeError("comm slot before the first flight step")
        if st.slot_idx >= self.n_slots:
            raise RuntimeError("comm slots of this period are exhausted")

        frac = np.asarray(fractions, dtype=float)
        n = len(self.cfg.nodes)
        if frac.shape != (n,):
            raise ValueError(f"expected {n} bandwidth fractions, got shape {frac.shape}")
        if np.any(frac < 0.0) or abs(float(frac.sum()) - 1.0) > 1e-9:
            raise ValueError("bandwidth fractions must be >= 0 and sum to 1")

        rates = self._slot_rates(frac)
        volume = rates * self.slot_seconds / 1e6
        xi = self.cfg.physics.rate_threshold_mb
        collected = np.where(volume < xi, 0.0, np.minimum(volume, st.node_data))
        st.node_data = st.node_data - collected
        grown = st.node_data + self._growth
        lost = np.maximum(grown - self._cap, 0.0)
        st.node_data = np.minimum(grown, self._cap)

        n_lost = int(np.count_nonzero(lost > 0.0))
        reward = self.rewards.collection_weight * float(collected.sum()) \
            + self.rewards.data_loss * n_lost

        st.slot_idx += 1
        if st.slot_idx >= self.n_slots and st.period_idx >= self.max_periods:
            st.truncated = True

        return StepReport(
            period_idx=st.period_idx, slot_idx=st.slot_idx, reward=reward,
            fractions=frac.copy(), rates_bps=rates, collected_mb=collected,
            lost_mb=lost, data_loss=bool(n_lost),
        )

    def run_option(self, flight_action, lower_policy=None) -> OptionReport:
        """One full decision period: flight step, then every comm slot with
        fractions from lower_policy(env, slot_index). Landing or battery
        exhaustion ends the option before its comm slots."""

        fr = self.step_flight(flight_action)
        slots = []
        if not self.terminal:
            if lower_policy is None:
                raise ValueError("lower_policy required while comm slots remain")
            for m in range(self.n_slots):
                slots.append(self.step_comm(lower_policy(self, m)))
        reward = fr.reward + sum(rep.reward for rep in slots)
        return OptionReport(flight=fr, slots=slots, reward=reward)

    # -- channel helpers -------------------------------------------------

    def _slot_rates(self, frac: np.ndarray) -> np.ndarray:
        st = self.state
        p = self.cfg.physics
        ux, uy = st.uav_cell
        rng = self._rng
        bw = p.total_bw_hz * frac

        shadow_n = rng.normal(0.0, self._sigma_node[ux, uy]) if self.fading \
            else np.zeros(len(self.cfg.nodes))
        n_jam = len(self.cfg.jammers)
        shadow_j = rng.normal(0.0, self._sigma_jam[ux, uy]) if (self.fading and n_jam) \
            else np.zeros(n_jam)

        gain_n = 10.0 ** (-(self._base_loss_node[ux, uy] + shadow_n) / 10.0)
        gain_j = 10.0 ** (-(self._base_loss_jam[ux, uy] + shadow_j) / 10.0)
        jam_terms = self._jam_power * self._jam_gain * gain_j * self._in_cone[ux, uy]

        sig = self._tx * gain_n
        noise = bw * p.noise_psd_w_per_hz
        if self.robust is not None:
            rob = self.robust
            eps_i = rng.uniform(0.0, rob.csi_delta_db, size=len(self.cfg.nodes))
            eps_j = rng.uniform(0.0, rob.csi_delta_db, size=n_jam)
            a = rng.exponential(rob.inf_mean) if rob.inf_mean > 0 else 0.0
            sig = sig * 10.0 ** (-eps_i / 10.0)
            jam_total = float(np.sum(jam_terms * 10.0 ** (eps_j / 10.0)))
            noise = (1.0 + a) * noise
        else:
            jam_total = float(np.sum(jam_terms))

        denom = noise + jam_total
        safe = np.where(denom > 0.0, denom, 1.0)
        snr = np.where(denom > 0.0, sig / safe, 0.0)
        return np.where(bw > 0.0, bw * np.log2(1.0 + snr), 0.0)

    def deterministic_rates(self, fractions=None) -> np.ndarray:
        """Per-node rates at the current cell with shadowing and robustness
        stripped; full-band rates when fractions is None. The greedy TDMA rule
        ranks nodes with this view."""

        st = self.state
        p = self.cfg.physics
        ux, uy = st.uav_cell
        n = len(self.cfg.nodes)
        bw = np.full(n, p.total_bw_hz) if fractions is None else p.total_bw_hz * np.asarray(fractions)
        gain_n = 10.0 ** (-self._base_loss_node[ux, uy] / 10.0)
        gain_j = 10.0 ** (-self._base_loss_jam[ux, uy] / 10.0)
        jam_total = float(np.sum(self._jam_power * self._jam_gain * gain_j * self._in_cone[ux, uy]))
        denom = bw * p.noise_psd_w_per_hz + jam_total
        safe = np.where(denom > 0.0, denom, 1.0)
        snr = np.where(denom > 0.0, self._tx * gain_n / safe, 0.0)
        return np.where(bw > 0.0, bw * np.log2(1.0 + snr), 0.0)
