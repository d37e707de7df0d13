"""Deterministic-policy agents for the two-timescale collection task.

Three agent kinds share the same network and update machinery:

    tbh   two DDPG pairs, one picking a flight action per period, one picking
          a bandwidth split per comm slot
    tbjn  one DDPG pair emitting flight scores and a bandwidth split jointly,
          held fixed across the period's slots
    tdma  the flight DDPG pair plus a greedy whole-band rule that serves the
          node with the best deterministic full-band rate

Actors emit raw scores; a small head object turns scores into the stored
action (argmax one-hot, softmax simplex, or both blockwise), supplies the
differentiable relaxation for the policy gradient, and backpropagates through
it. Critics always consume the stored action encoding.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .env import (DataCollectionEnv, FlightAction, N_FLIGHT_ACTIONS,
                  OptionReport, episode_metrics)
from .observation import ObservationBuilder


@dataclass
class AgentConfig:
    hidden: tuple[int, int] = (128, 128)
    actor_lr: float = 1e-4
    critic_lr: float = 1e-4
    gamma_upper: float = 0.99
    gamma_lower: float = 0.995
    soft_upper: float = 0.005
    soft_lower: float = 1e-5
    noise_upper: float = 3.0
    noise_lower: float = 1.0
    buffer_capacity: int = 30000
    batch_size: int = 128
    update_warmup: str = "batch"  # "batch" starts once sampleable, "full" waits for a full ring


@dataclass
class Transition:
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity FIFO ring with uniform batch sampling."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int, dtype=np.float64):
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim), dtype=dtype)
        self.act = np.zeros((capacity, act_dim), dtype=dtype)
        self.rew = np.zeros(capacity, dtype=dtype)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=dtype)
        self.term = np.zeros(capacity, dtype=dtype)
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, obs, action, reward, next_obs, terminal) -> None:
        i = self._next
        self.obs[i] = obs
        self.act[i] = action
        self.rew[i] = reward
        self.next_obs[i] = next_obs
        self.term[i] = float(terminal)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def push_transition(self, tr: Transition) -> None:
        self.push(tr.obs, tr.action, tr.reward, tr.next_obs, tr.terminal)

    def sample(self, rng: np.random.Generator, batch: int):
        idx = rng.choice(self._size, size=batch, replace=False)
        return (self.obs[idx], self.act[idx], self.rew[idx],
                self.next_obs[idx], self.term[idx])


def one_hot(idx: int, n: int) -> np.ndarray:
    v = np.zeros(n)
    v[idx] = 1.0
    return v


class DiscreteHead:
    """Argmax over noisy scores; critics see one-hots; gradients flow through
    a softmax relaxation of the scores."""

    def __init__(self, n: int):
        self.n = n

    def select(self, scores, rng=None, noise: float = 0.0) -> int:
        s = np.asarray(scores, dtype=float)
        if noise > 0.0:
            s = s + rng.normal(0.0, noise, size=s.shape)
        return int(np.argmax(s))

    def stored(self, scores, rng=None, noise: float = 0.0) -> np.ndarray:
        return one_hot(self.select(scores, rng, noise), self.n)

    def target_vec(self, scores2d: np.ndarray) -> np.ndarray:
        out = np.zeros_like(scores2d)
        out[np.arange(scores2d.shape[0]), np.argmax(scores2d, axis=1)] = 1.0
        return out

    def diff(self, scores2d):
        return nn.softmax(scores2d)

    def vjp(self, action2d, grad2d):
        return nn.softmax_vjp(action2d, grad2d)


class SimplexHead:
    """Softmax of noisy scores: nonnegative fractions summing to one."""

    def __init__(self, n: int):
        self.n = n

    def stored(self, scores, rng=None, noise: float = 0.0) -> np.ndarray:
        s = np.asarray(scores, dtype=float)
        if noise > 0.0:
            s = s + rng.normal(0.0, noise, size=s.shape)
        return nn.softmax(s)

    def target_vec(self, scores2d):
        return nn.softmax(scores2d)

    def diff(self, scores2d):
        return nn.softmax(scores2d)

    def vjp(self, action2d, grad2d):
        return nn.softmax_vjp(action2d, grad2d)


class JointHead:
    """Blockwise head for the joint agent: discrete flight scores followed by
    a bandwidth simplex."""

    def __init__(self, n_moves: int, n_nodes: int):
        self.n_moves = n_moves
        self.n_nodes = n_nodes
        self.n = n_moves + n_nodes
        self._disc = DiscreteHead(n_moves)
        self._simp = SimplexHead(n_nodes)

    def split(self, scores):
        return scores[..., :self.n_moves], scores[..., self.n_moves:]

    def select(self, scores, rng=None, noise_move: float = 0.0, noise_alloc: float = 0.0):
        sm, sa = self.split(np.asarray(scores, dtype=float))
        idx = self._disc.select(sm, rng, noise_move)
        frac = self._simp.stored(sa, rng, noise_alloc)
        return idx, frac

    def stored_from(self, idx: int, frac: np.ndarray) -> np.ndarray:
        return np.concatenate([one_hot(idx, self.n_moves), frac])

    def target_vec(self, scores2d):
        sm, sa = self.split(scores2d)
        return np.concatenate([self._disc.target_vec(sm), nn.softmax(sa)], axis=1)

    def diff(self, scores2d):
        sm, sa = self.split(scores2d)
        return np.concatenate([nn.softmax(sm), nn.softmax(sa)], axis=1)

    def vjp(self, action2d, grad2d):
        am, aa = self.split(action2d)
        gm, ga = self.split(grad2d)
        return np.concatenate([nn.softmax_vjp(am, gm), nn.softmax_vjp(aa, ga)], axis=1)


class DdpgPair:
    """Actor-critic with target twins and Adam, specialized by a head object."""

    def __init__(self, obs_dim: int, head, gamma: float, soft_eps: float,
                 hidden=(128, 128), actor_lr: float = 1e-4, critic_lr: float = 1e-4,
                 seed=0, head_noise: float = 0.0, alloc_noise: float = 0.0):
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        s_actor, s_critic = ss.spawn(2)
        self.head = head
        self.gamma = gamma
        self.soft_eps = soft_eps
        self.obs_dim = obs_dim
        self.head_noise = head_noise
        self.alloc_noise = alloc_noise
        self.actor = nn.Mlp([obs_dim, *hidden, head.n], head="identity", seed=s_actor)
        self.critic = nn.Mlp([obs_dim + head.n, *hidden, 1], head="identity", seed=s_critic)
        self.target_actor = self.actor.clone()
        self.target_critic = self.critic.clone()
        self.actor_opt = nn.adam_init(self.actor, actor_lr)
        self.critic_opt = nn.adam_init(self.critic, critic_lr)


def select_option(pair: DdpgPair, obs, explore: bool, rng=None) -> int:
    """Flight action index: argmax of actor scores, noisy when exploring."""

    scores = pair.actor.forward(obs)
    noise = pair.head_noise if explore else 0.0
    return pair.head.select(scores, rng, noise)


def select_allocation(pair: DdpgPair, obs, explore: bool, rng=None) -> np.ndarray:
    """Bandwidth fractions: softmax of actor scores, noisy pre-softmax when
    exploring. Always a valid simplex point."""

    scores = pair.actor.forward(obs)
    noise = pair.head_noise if explore else 0.0
    return pair.head.stored(scores, rng, noise)


def critic_target(pair: DdpgPair, reward, next_obs, terminal) -> np.ndarray:
    """Bootstrapped target: r + gamma * Q'(s', pi'(s')), zeroed past terminal."""

    next_obs = np.atleast_2d(np.asarray(next_obs, dtype=float))
    rew = np.atleast_1d(np.asarray(reward, dtype=float))
    term = np.atleast_1d(np.asarray(terminal, dtype=float))
    ns = pair.target_actor.forward(next_obs)
    na = pair.head.target_vec(ns)
    q_next = pair.target_critic.forward(np.concatenate([next_obs, na], axis=1))[:, 0]
    return rew + pair.gamma * (1.0 - term) * q_next


def update_pair(pair: DdpgPair, batch) -> tuple[float, float]:
    """One DDPG step on a sampled batch: critic MSE descent toward the
    bootstrapped target, actor ascent on Q through the head relaxation, then
    soft target updates. Returns (critic_loss, actor_loss)."""

    obs, act, rew, next_obs, term = batch
    b = obs.shape[0]

    y = critic_target(pair, rew, next_obs, term)
    xq = np.concatenate([obs, act], axis=1)
    q = pair.critic.forward(xq)[:, 0]
    diff = q - y
    critic_loss = float(np.mean(diff * diff))
    grads, _ = pair.critic.backward(xq, (2.0 / b) * diff[:, None])
    nn.adam_step(pair.critic, grads, pair.critic_opt)

    scores = pair.actor.forward(obs)
    a = pair.head.diff(scores)
    xa = np.concatenate([obs, a], axis=1)
    qa = pair.critic.forward(xa)[:, 0]
    actor_loss = float(-np.mean(qa))
    _, din = pair.critic.backward(xa, np.full((b, 1), -1.0 / b), want_param_grads=False)
    d_action = din[:, pair.obs_dim:]
    d_scores = pair.head.vjp(a, d_action)
    agrads, _ = pair.actor.backward(obs, d_scores)
    nn.adam_step(pair.actor, agrads, pair.actor_opt)

    nn.soft_update(pair.target_actor, pair.actor, pair.soft_eps)
    nn.soft_update(pair.target_critic, pair.critic, pair.soft_eps)
    return critic_loss, actor_loss


def tdma_allocation(env: DataCollectionEnv) -> np.ndarray:
    """Whole band to the node with the best deterministic full-band rate at
    the UAV's current cell; ties go to the lowest node index."""

    rates = env.deterministic_rates()
    return one_hot(int(np.argmax(rates)), len(rates))


def tbjn_policy(pair: DdpgPair, obs, explore: bool, rng=None):
    """Joint decision: (flight action index, bandwidth fractions)."""

    scores = pair.actor.forward(obs)
    nm = pair.head_noise if explore else 0.0
    na = pair.alloc_noise if explore else 0.0
    return pair.head.select(scores, rng, nm, na)


@dataclass
class TraceRecorder:
    """Per-slot and per-period detail kept from one evaluation episode."""

    trajectory: list = field(default_factory=list)
    fractions: list = field(default_factory=list)
    collected: list = field(default_factory=list)

    def on_reset(self, env):
        self.trajectory.append(env.state.uav_cell)

    def on_option(self, opt: OptionReport):
        self.trajectory.append(opt.flight.cell_after)
        for rep in opt.slots:
            self.fractions.append(rep.fractions)
            self.collected.append(rep.collected_mb)


class _AgentBase:
    kind = "?"

    def __init__(self, obs_dim: int, n_nodes: int, cfg: AgentConfig, seed=0):
        self.obs_dim = obs_dim
        self.n_nodes = n_nodes
        self.cfg = cfg
        root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self._seed_pairs, s_upd = root.spawn(2)
        self._rng_update = np.random.default_rng(s_upd)

    def _warmup(self) -> int:
        return self.cfg.batch_size if self.cfg.update_warmup == "batch" else self.cfg.buffer_capacity

    def _maybe_update(self, pair: DdpgPair, buf: ReplayBuffer):
        if len(buf) >= max(self._warmup(), self.cfg.batch_size):
            update_pair(pair, buf.sample(self._rng_update, self.cfg.batch_size))

    def play_episode(self, env, builder, rng=None, explore=False, learn=False, record=None):
        raise NotImplementedError

    def state_dict(self) -> tuple[dict, dict]:
        raise NotImplementedError


def _pair_arrays(tag: str, pair: DdpgPair, arrays: dict) -> None:
    for name, net in (("actor", pair.actor), ("critic", pair.critic),
                      ("tactor", pair.target_actor), ("tcritic", pair.target_critic)):
        for k, v in net.param_arrays().items():
            arrays[f"{tag}.{name}.{k}"] = v
    for name, opt in (("aopt", pair.actor_opt), ("copt", pair.critic_opt)):
        for i in range(len(opt.m_w)):
            arrays[f"{tag}.{name}.m_w{i}"] = opt.m_w[i]
            arrays[f"{tag}.{name}.v_w{i}"] = opt.v_w[i]
            arrays[f"{tag}.{name}.m_b{i}"] = opt.m_b[i]
            arrays[f"{tag}.{name}.v_b{i}"] = opt.v_b[i]
        arrays[f"{tag}.{name}.t"] = np.array(opt.t)


def _pair_load(tag: str, pair: DdpgPair, arrays: dict) -> None:
    for name, net in (("actor", pair.actor), ("critic", pair.critic),
                      ("tactor", pair.target_actor), ("tcritic", pair.target_critic)):
        sub = {k.split(".")[-1]: v for k, v in arrays.items() if k.startswith(f"{tag}.{name}.")}
        net.load_param_arrays(sub)
    for name, opt in (("aopt", pair.actor_opt), ("copt", pair.critic_opt)):
        for i in range(len(opt.m_w)):
            opt.m_w[i] = np.array(arrays[f"{tag}.{name}.m_w{i}"])
            opt.v_w[i] = np.array(arrays[f"{tag}.{name}.v_w{i}"])
            opt.m_b[i] = np.array(arrays[f"{tag}.{name}.m_b{i}"])
            opt.v_b[i] = np.array(arrays[f"{tag}.{name}.v_b{i}"])
        opt.t = int(arrays[f"{tag}.{name}.t"])


class TbhAgent(_AgentBase):
    """Two-timescale hierarchy: a flight pair at period granularity and a
    bandwidth pair at slot granularity, each with its own replay ring."""

    kind = "tbh"

    def __init__(self, obs_dim, n_nodes, cfg: AgentConfig, seed=0):
        super().__init__(obs_dim, n_nodes, cfg, seed)
        s_up, s_lo = self._seed_pairs.spawn(2)
        self.upper = DdpgPair(obs_dim, DiscreteHead(N_FLIGHT_ACTIONS), cfg.gamma_upper,
                              cfg.soft_upper, cfg.hidden, cfg.actor_lr, cfg.critic_lr, s_up)
        self.upper.head_noise = cfg.noise_upper
        self.lower = DdpgPair(obs_dim, SimplexHead(n_nodes), cfg.gamma_lower,
                              cfg.soft_lower, cfg.hidden, cfg.actor_lr, cfg.critic_lr, s_lo)
        self.lower.head_noise = cfg.noise_lower
        self.upper_buf = ReplayBuffer(cfg.buffer_capacity, obs_dim, N_FLIGHT_ACTIONS)
        self.lower_buf = ReplayBuffer(cfg.buffer_capacity, obs_dim, n_nodes)

    def play_episode(self, env, builder, rng=None, explore=False, learn=False, record=None):
        if record:
            record.on_reset(env)
        obs = builder.build_from(env)
        options = []
        while not env.terminal:
            a = select_option(self.upper, obs, explore, rng)
            fr = env.step_flight(a)
            r_up = fr.reward
            slots = []
            if not env.terminal:
                obs_slot = builder.build_from(env)
                for _ in range(env.n_slots):
                    frac = select_allocation(self.lower, obs_slot, explore, rng)
                    rep = env.step_comm(frac)
                    next_slot = builder.build_from(env)
                    if learn:
                        self.lower_buf.push(obs_slot, frac, rep.reward, next_slot, env.terminal)
                        self._maybe_update(self.lower, self.lower_buf)
                    r_up += rep.reward
                    slots.append(rep)
                    obs_slot = next_slot
                next_obs = obs_slot
            else:
                next_obs = builder.build_from(env)
            if learn:
                self.upper_buf.push(obs, one_hot(a, N_FLIGHT_ACTIONS), r_up, next_obs, env.terminal)
                self._maybe_update(self.upper, self.upper_buf)
            opt = OptionReport(flight=fr, slots=slots, reward=r_up)
            if record:
                record.on_option(opt)
            options.append(opt)
            obs = next_obs
        return episode_metrics(options), options

    def flops_per_period(self, comm_slots: int) -> int:
        return nn.flop_count(self.upper.actor.layer_dims) \
            + comm_slots * nn.flop_count(self.lower.actor.layer_dims)

    def state_dict(self):
        arrays = {}
        _pair_arrays("upper", self.upper, arrays)
        _pair_arrays("lower", self.lower, arrays)
        return {"kind": self.kind, "obs_dim": self.obs_dim, "n_nodes": self.n_nodes}, arrays

    def load_state_dict(self, arrays: dict) -> None:
        _pair_load("upper", self.upper, arrays)
        _pair_load("lower", self.lower, arrays)


class TbjnAgent(_AgentBase):
    """Joint flat baseline: one pair decides flight and a period-wide split."""

    kind = "tbjn"

    def __init__(self, obs_dim, n_nodes, cfg: AgentConfig, seed=0):
        super().__init__(obs_dim, n_nodes, cfg, seed)
        (s_joint,) = self._seed_pairs.spawn(1)
        self.pair = DdpgPair(obs_dim, JointHead(N_FLIGHT_ACTIONS, n_nodes), cfg.gamma_upper,
                             cfg.soft_upper, cfg.hidden, cfg.actor_lr, cfg.critic_lr, s_joint)
        self.pair.head_noise = cfg.noise_upper
        self.pair.alloc_noise = cfg.noise_lower
        self.buf = ReplayBuffer(cfg.buffer_capacity, obs_dim, N_FLIGHT_ACTIONS + n_nodes)

    def play_episode(self, env, builder, rng=None, explore=False, learn=False, record=None):
        if record:
            record.on_reset(env)
        obs = builder.build_from(env)
        options = []
        while not env.terminal:
            a, frac = tbjn_policy(self.pair, obs, explore, rng)
            fr = env.step_flight(a)
            r_up = fr.reward
            slots = []
            if not env.terminal:
                for _ in range(env.n_slots):
                    rep = env.step_comm(frac)
                    r_up += rep.reward
                    slots.append(rep)
            next_obs = builder.build_from(env)
            if learn:
                self.buf.push(obs, self.pair.head.stored_from(a, frac), r_up, next_obs, env.terminal)
                self._maybe_update(self.pair, self.buf)
            opt = OptionReport(flight=fr, slots=slots, reward=r_up)
            if record:
                record.on_option(opt)
            options.append(opt)
            obs = next_obs
        return episode_metrics(options), options

    def flops_per_period(self, comm_slots: int) -> int:
        return nn.flop_count(self.pair.actor.layer_dims)

    def state_dict(self):
        arrays = {}
        _pair_arrays("joint", self.pair, arrays)
        return {"kind": self.kind, "obs_dim": self.obs_dim, "n_nodes": self.n_nodes}, arrays

    def load_state_dict(self, arrays: dict) -> None:
        _pair_load("joint", self.pair, arrays)


class TdmaAgent(_AgentBase):
    """Learned flight policy over the greedy whole-band allocation rule."""

    kind = "tdma"

    def __init__(self, obs_dim, n_nodes, cfg: AgentConfig, seed=0):
        super().__init__(obs_dim, n_nodes, cfg, seed)
        (s_up,) = self._seed_pairs.spawn(1)
        self.upper = DdpgPair(obs_dim, DiscreteHead(N_FLIGHT_ACTIONS), cfg.gamma_upper,
                              cfg.soft_upper, cfg.hidden, cfg.actor_lr, cfg.critic_lr, s_up)
        self.upper.head_noise = cfg.noise_upper
        self.upper_buf = ReplayBuffer(cfg.buffer_capacity, obs_dim, N_FLIGHT_ACTIONS)

    def play_episode(self, env, builder, rng=None, explore=False, learn=False, record=None):
        if record:
            record.on_reset(env)
        obs = builder.build_from(env)
        options = []
        while not env.terminal:
            a = select_option(self.upper, obs, explore, rng)
            fr = env.step_flight(a)
            r_up = fr.reward
            slots = []
            if not env.terminal:
                for _ in range(env.n_slots):
                    rep = env.step_comm(tdma_allocation(env))
                    r_up += rep.reward
                    slots.append(rep)
            next_obs = builder.build_from(env)
            if learn:
                self.upper_buf.push(obs, one_hot(a, N_FLIGHT_ACTIONS), r_up, next_obs, env.terminal)
                self._maybe_update(self.upper, self.upper_buf)
            opt = OptionReport(flight=fr, slots=slots, reward=r_up)
            if record:
                record.on_option(opt)
            options.append(opt)
            obs = next_obs
        return episode_metrics(options), options

    def flops_per_period(self, comm_slots: int) -> int:
        return nn.flop_count(self.upper.actor.layer_dims)

    def state_dict(self):
        arrays = {}
        _pair_arrays("upper", self.upper, arrays)
        return {"kind": self.kind, "obs_dim": self.obs_dim, "n_nodes": self.n_nodes}, arrays

    def load_state_dict(self, arrays: dict) -> None:
        _pair_load("upper", self.upper, arrays)


AGENT_KINDS = ("tbh", "tbjn", "tdma")


def make_agent(kind: str, obs_dim: int, n_nodes: int, cfg: AgentConfig | None = None, seed=0):
    cfg = cfg or AgentConfig()
    cls = {"tbh": TbhAgent, "tbjn": TbjnAgent, "tdma": TdmaAgent}.get(kind)
    if cls is None:
        raise ValueError(f"unknown agent kind '{kind}' (have: {', '.join(AGENT_KINDS)})")
    return cls(obs_dim, n_nodes, cfg, seed)


@dataclass
class TrainLogRow:
    episode: int
    reward: float
    collected_mb: float
    lost_mb: float
    collisions: int
    steps: int
    wall_ms: float


def train(agent, env: DataCollectionEnv, builder: ObservationBuilder,
          episodes: int, seed: int, on_episode=None) -> list[TrainLogRow]:
    """Seeded training run; one log row per episode. Exploration, update
    sampling and per-episode environment draws come from disjoint streams of
    the given seed, so identical inputs replay identically."""

    root = np.random.SeedSequence(seed)
    ss_env, ss_explore = root.spawn(2)
    explore_rng = np.random.default_rng(ss_explore)
    rows = []
    for ep in range(episodes):
        t0 = time.perf_counter()
        env.reset(ss_env.spawn(1)[0])
        builder.reset(env.state.jammers)
        metrics, _ = agent.play_episode(env, builder, rng=explore_rng, explore=True, learn=True)
        wall_ms = (time.perf_counter() - t0) * 1e3
        row = TrainLogRow(episode=ep, reward=metrics.reward, collected_mb=metrics.collected_mb,
                          lost_mb=metrics.lost_mb, collisions=metrics.collisions,
                          steps=metrics.periods, wall_ms=wall_ms)
        rows.append(row)
        if on_episode:
            on_episode(row)
    return rows


def evaluate(agent, env: DataCollectionEnv, builder: ObservationBuilder,
             episodes: int, seed: int):
    """Greedy rollouts without learning; returns (metrics list, first-episode
    TraceRecorder)."""

    ss_env = np.random.SeedSequence(seed)
    rows = []
    trace = None
    for ep in range(episodes):
        env.reset(ss_env.spawn(1)[0])
        builder.reset(env.state.jammers)
        rec = TraceRecorder() if ep == 0 else None
        metrics, _ = agent.play_episode(env, builder, rng=None, explore=False,
                                        learn=False, record=rec)
        if rec is not None:
            trace = rec
        rows.append(metrics)
    return rows, trace
