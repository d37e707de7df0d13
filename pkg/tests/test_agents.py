import numpy as np
import pytest

from uavdc import agents as ag
from uavdc import nn
from uavdc.env import DataCollectionEnv, FlightAction, N_FLIGHT_ACTIONS
from uavdc.observation import ObservationBuilder

from conftest import make_mini_scenario


def small_cfg(**kw):
    base = dict(hidden=(16, 16), actor_lr=1e-3, critic_lr=1e-3,
                buffer_capacity=256, batch_size=8, noise_upper=3.0, noise_lower=1.0)
    base.update(kw)
    return ag.AgentConfig(**base)


# --------------------------------------------------------------- replay buffer

def test_buffer_fifo_overwrite():
    buf = ag.ReplayBuffer(capacity=3, obs_dim=2, act_dim=1)
    for k in range(5):
        buf.push(np.array([k, k]), np.array([k]), float(k), np.array([k, k]), False)
    assert len(buf) == 3
    # oldest two entries (0, 1) are gone; slots hold 3, 4, 2
    held = sorted(float(buf.rew[i]) for i in range(3))
    assert held == [2.0, 3.0, 4.0]


def test_buffer_sample_without_replacement():
    buf = ag.ReplayBuffer(capacity=10, obs_dim=1, act_dim=1)
    for k in range(10):
        buf.push(np.array([k]), np.array([0.0]), float(k), np.array([k]), False)
    rng = np.random.default_rng(0)
    obs, act, rew, nxt, term = buf.sample(rng, 10)
    assert sorted(rew.tolist()) == list(range(10))
    assert obs.shape == (10, 1) and term.shape == (10,)


def test_buffer_sample_is_seeded():
    buf = ag.ReplayBuffer(capacity=50, obs_dim=1, act_dim=1)
    for k in range(50):
        buf.push(np.array([k]), np.array([0.0]), float(k), np.array([k]), False)
    a = buf.sample(np.random.default_rng(7), 5)[2]
    b = buf.sample(np.random.default_rng(7), 5)[2]
    np.testing.assert_array_equal(a, b)


def test_push_transition_matches_push():
    buf = ag.ReplayBuffer(capacity=4, obs_dim=2, act_dim=2)
    tr = ag.Transition(np.array([1.0, 2.0]), np.array([0.0, 1.0]), 3.0,
                       np.array([4.0, 5.0]), True)
    buf.push_transition(tr)
    assert buf.rew[0] == 3.0 and buf.term[0] == 1.0
    np.testing.assert_array_equal(buf.obs[0], [1.0, 2.0])


# ----------------------------------------------------------------------- heads

def test_one_hot():
    np.testing.assert_array_equal(ag.one_hot(2, 4), [0, 0, 1, 0])


def test_discrete_head_select_and_noise():
    head = ag.DiscreteHead(4)
    scores = np.array([0.1, 3.0, -1.0, 2.9])
    assert head.select(scores) == 1
    np.testing.assert_array_equal(head.stored(scores), [0, 1, 0, 0])
    a = head.select(scores, np.random.default_rng(3), noise=5.0)
    b = head.select(scores, np.random.default_rng(3), noise=5.0)
    assert a == b  # same stream, same pick
    picks = {head.select(scores, np.random.default_rng(s), noise=50.0) for s in range(40)}
    assert len(picks) > 1  # big noise actually explores


def test_discrete_head_target_vec_batch():
    head = ag.DiscreteHead(3)
    out = head.target_vec(np.array([[1.0, 2.0, 0.0], [5.0, 1.0, 4.0]]))
    np.testing.assert_array_equal(out, [[0, 1, 0], [1, 0, 0]])


def test_simplex_head_valid_split():
    head = ag.SimplexHead(5)
    rng = np.random.default_rng(1)
    for noise in (0.0, 1.0):
        frac = head.stored(rng.normal(size=5), rng, noise)
        assert frac.shape == (5,)
        assert np.all(frac >= 0.0)
        assert frac.sum() == pytest.approx(1.0, abs=1e-12)


def test_joint_head_blocks():
    head = ag.JointHead(6, 3)
    assert head.n == 9
    scores = np.arange(9.0)
    idx, frac = head.select(scores)
    assert idx == 5  # argmax of the first six
    assert frac.sum() == pytest.approx(1.0)
    stored = head.stored_from(idx, frac)
    np.testing.assert_array_equal(stored[:6], ag.one_hot(5, 6))
    np.testing.assert_array_equal(stored[6:], frac)


def test_joint_head_vjp_is_blockwise():
    head = ag.JointHead(4, 3)
    rng = np.random.default_rng(2)
    scores = rng.normal(size=(2, 7))
    relaxed = head.diff(scores)
    grad = rng.normal(size=(2, 7))
    got = head.vjp(relaxed, grad)
    want_m = nn.softmax_vjp(relaxed[:, :4], grad[:, :4])
    want_a = nn.softmax_vjp(relaxed[:, 4:], grad[:, 4:])
    np.testing.assert_allclose(got, np.concatenate([want_m, want_a], axis=1), rtol=1e-14)


@pytest.mark.parametrize("head_cls,n", [(ag.DiscreteHead, 4), (ag.SimplexHead, 4)])
def test_head_vjp_matches_finite_differences(head_cls, n):
    """d softmax(s) / d s pulled back through the head's vjp."""

    head = head_cls(n)
    rng = np.random.default_rng(5)
    s = rng.normal(size=n)
    up = rng.normal(size=n)
    got = head.vjp(head.diff(s[None, :]), up[None, :])[0]
    fd = np.zeros(n)
    for i in range(n):
        sp = s.copy(); sp[i] += 1e-6
        sm = s.copy(); sm[i] -= 1e-6
        fd[i] = (np.sum(up * nn.softmax(sp)) - np.sum(up * nn.softmax(sm))) / 2e-6
    np.testing.assert_allclose(got, fd, rtol=1e-5, atol=1e-9)


# ------------------------------------------------------------------- ddpg pair

def test_pair_shapes_and_seeding():
    pair = ag.DdpgPair(obs_dim=5, head=ag.SimplexHead(3), gamma=0.99, soft_eps=0.01,
                       hidden=(8, 8), seed=4)
    assert pair.actor.layer_dims == (5, 8, 8, 3)
    assert pair.critic.layer_dims == (8, 8, 8, 1)
    twin = ag.DdpgPair(obs_dim=5, head=ag.SimplexHead(3), gamma=0.99, soft_eps=0.01,
                       hidden=(8, 8), seed=4)
    np.testing.assert_array_equal(pair.actor.weights[0], twin.actor.weights[0])
    other = ag.DdpgPair(obs_dim=5, head=ag.SimplexHead(3), gamma=0.99, soft_eps=0.01,
                        hidden=(8, 8), seed=5)
    assert not np.array_equal(pair.actor.weights[0], other.actor.weights[0])
    # targets start as exact copies
    np.testing.assert_array_equal(pair.actor.weights[0], pair.target_actor.weights[0])


def test_select_helpers_greedy_vs_noisy():
    pair = ag.DdpgPair(4, ag.DiscreteHead(6), 0.99, 0.01, hidden=(8, 8), seed=0,
                       head_noise=100.0)
    obs = np.ones(4)
    greedy = ag.select_option(pair, obs, explore=False)
    assert greedy == ag.select_option(pair, obs, explore=False)
    noisy = {ag.select_option(pair, obs, explore=True, rng=np.random.default_rng(s))
             for s in range(30)}
    assert len(noisy) > 1

    spair = ag.DdpgPair(4, ag.SimplexHead(3), 0.99, 0.01, hidden=(8, 8), seed=1)
    frac = ag.select_allocation(spair, obs, explore=False)
    assert frac.sum() == pytest.approx(1.0) and np.all(frac >= 0)


def test_critic_target_formula():
    pair = ag.DdpgPair(3, ag.DiscreteHead(2), gamma=0.9, soft_eps=0.01,
                       hidden=(6, 6), seed=7)
    next_obs = np.random.default_rng(0).normal(size=(4, 3))
    rew = np.array([1.0, -2.0, 0.5, 3.0])
    term = np.array([0.0, 1.0, 0.0, 1.0])
    got = ag.critic_target(pair, rew, next_obs, term)
    scores = pair.target_actor.forward(next_obs)
    acts = np.zeros_like(scores)
    acts[np.arange(4), np.argmax(scores, axis=1)] = 1.0
    qn = pair.target_critic.forward(np.concatenate([next_obs, acts], axis=1))[:, 0]
    np.testing.assert_allclose(got, rew + 0.9 * (1 - term) * qn, rtol=1e-14)
    # terminal rows bootstrap to the bare reward
    assert got[1] == -2.0 and got[3] == 3.0


def test_update_pair_reduces_critic_loss():
    rng = np.random.default_rng(11)
    pair = ag.DdpgPair(4, ag.SimplexHead(3), gamma=0.0, soft_eps=0.01,
                       hidden=(16, 16), actor_lr=1e-3, critic_lr=1e-3, seed=2)
    obs = rng.normal(size=(32, 4))
    act = nn.softmax(rng.normal(size=(32, 3)))
    rew = rng.normal(size=32)
    batch = (obs, act, rew, obs, np.ones(32))  # terminal, so target is just rew
    first = ag.update_pair(pair, batch)[0]
    for _ in range(400):
        last = ag.update_pair(pair, batch)[0]
    assert last < 0.1 * first


def test_update_pair_moves_targets():
    pair = ag.DdpgPair(3, ag.DiscreteHead(2), 0.9, soft_eps=0.5, hidden=(6, 6), seed=3)
    rng = np.random.default_rng(4)
    batch = (rng.normal(size=(8, 3)), np.eye(2)[rng.integers(0, 2, 8)],
             rng.normal(size=8), rng.normal(size=(8, 3)), np.zeros(8))
    before_t = pair.target_critic.weights[0].copy()
    before_on = pair.critic.weights[0].copy()
    ag.update_pair(pair, batch)
    assert not np.array_equal(pair.critic.weights[0], before_on)
    assert not np.array_equal(pair.target_critic.weights[0], before_t)
    # target lives between its old self and the new online net
    gap_new = np.abs(pair.target_critic.weights[0] - pair.critic.weights[0]).sum()
    gap_if_frozen = np.abs(before_t - pair.critic.weights[0]).sum()
    assert gap_new < gap_if_frozen


# ------------------------------------------------------------------ tdma rule

def test_tdma_allocation_matches_rate_argmax(mini):
    e = DataCollectionEnv(mini, fading=False)
    e.reset(3)
    for cell in [(0, 0), (1, 3), (4, 1), (5, 5)]:
        e.state.uav_cell = cell
        frac = ag.tdma_allocation(e)
        rates = e.deterministic_rates()
        assert frac[int(np.argmax(rates))] == 1.0
        assert frac.sum() == 1.0


def test_tdma_tie_break_lowest_index(two_node, monkeypatch):
    e = DataCollectionEnv(two_node, fading=False)
    e.reset(0)
    monkeypatch.setattr(e, "deterministic_rates", lambda fractions=None: np.array([5.0, 5.0]))
    np.testing.assert_array_equal(ag.tdma_allocation(e), [1.0, 0.0])


# --------------------------------------------------------------------- agents

def test_make_agent_kinds():
    for kind in ag.AGENT_KINDS:
        a = ag.make_agent(kind, obs_dim=7, n_nodes=3, cfg=small_cfg(), seed=1)
        assert a.kind == kind
    with pytest.raises(ValueError):
        ag.make_agent("sarsa", 7, 3)


def test_agent_flops_per_period():
    cfg = small_cfg(hidden=(128, 128))
    tbh = ag.make_agent("tbh", 33, 7, cfg, seed=0)
    tbjn = ag.make_agent("tbjn", 33, 7, cfg, seed=0)
    tdma = ag.make_agent("tdma", 33, 7, cfg, seed=0)
    upper = nn.flop_count([33, 128, 128, 6])
    lower = nn.flop_count([33, 128, 128, 7])
    joint = nn.flop_count([33, 128, 128, 13])
    assert tbh.flops_per_period(4) == upper + 4 * lower
    assert tbjn.flops_per_period(4) == joint
    assert tdma.flops_per_period(4) == nn.flop_count([33, 128, 128, 6])
    assert tbh.flops_per_period(4) > tbjn.flops_per_period(4)


@pytest.mark.parametrize("kind", ag.AGENT_KINDS)
def test_play_episode_greedy(mini, kind):
    env = DataCollectionEnv(mini, fading=False, max_periods=6)
    builder = ObservationBuilder(mini)
    agent = ag.make_agent(kind, builder.obs_dim, 2, small_cfg(), seed=2)
    env.reset(5)
    builder.reset(env.state.jammers)
    rec = ag.TraceRecorder()
    metrics, options = agent.play_episode(env, builder, explore=False, record=rec)
    assert env.terminal
    assert metrics.periods == len(options) >= 1
    assert rec.trajectory[0] == (0, 0)
    assert len(rec.trajectory) == metrics.periods + 1
    for frac in rec.fractions:
        assert frac.sum() == pytest.approx(1.0) and np.all(frac >= 0)


@pytest.mark.parametrize("kind", ag.AGENT_KINDS)
def test_checkpoint_round_trip(mini, kind):
    env = DataCollectionEnv(mini, fading=False, max_periods=4)
    builder = ObservationBuilder(mini)
    agent = ag.make_agent(kind, builder.obs_dim, 2, small_cfg(), seed=3)
    ag.train(agent, env, builder, episodes=3, seed=9)

    meta, arrays = agent.state_dict()
    assert meta["kind"] == kind and meta["obs_dim"] == builder.obs_dim

    clone = ag.make_agent(kind, builder.obs_dim, 2, small_cfg(), seed=999)
    clone.load_state_dict(arrays)
    env.reset(123)
    builder.reset(env.state.jammers)
    m1, _ = agent.play_episode(env, builder, explore=False)
    env.reset(123)
    builder.reset(env.state.jammers)
    m2, _ = clone.play_episode(env, builder, explore=False)
    assert m1.reward == m2.reward and m1.periods == m2.periods


def test_train_is_deterministic(mini):
    def run():
        env = DataCollectionEnv(mini, fading=True, max_periods=5)
        builder = ObservationBuilder(mini)
        agent = ag.make_agent("tbh", builder.obs_dim, 2, small_cfg(), seed=11)
        rows = ag.train(agent, env, builder, episodes=4, seed=21)
        return [(r.episode, r.reward, r.collected_mb, r.lost_mb, r.collisions, r.steps)
                for r in rows]

    assert run() == run()


def test_train_seed_changes_rollouts(mini):
    env = DataCollectionEnv(mini, fading=True, max_periods=5)
    builder = ObservationBuilder(mini)
    a1 = ag.make_agent("tbh", builder.obs_dim, 2, small_cfg(), seed=11)
    r1 = ag.train(a1, env, builder, episodes=4, seed=21)
    a2 = ag.make_agent("tbh", builder.obs_dim, 2, small_cfg(), seed=11)
    r2 = ag.train(a2, env, builder, episodes=4, seed=22)
    assert [r.reward for r in r1] != [r.reward for r in r2]


def test_train_fills_buffers_and_logs(mini):
    env = DataCollectionEnv(mini, fading=False, max_periods=5)
    builder = ObservationBuilder(mini)
    agent = ag.make_agent("tbh", builder.obs_dim, 2, small_cfg(), seed=0)
    rows = ag.train(agent, env, builder, episodes=3, seed=1)
    assert len(rows) == 3
    assert [r.episode for r in rows] == [0, 1, 2]
    assert len(agent.upper_buf) > 0 and len(agent.lower_buf) > 0
    assert all(r.wall_ms >= 0.0 for r in rows)
    assert all(r.steps >= 1 for r in rows)


def test_evaluate_traces_first_episode(mini):
    env = DataCollectionEnv(mini, fading=False, max_periods=5)
    builder = ObservationBuilder(mini)
    agent = ag.make_agent("tdma", builder.obs_dim, 2, small_cfg(), seed=4)
    rows, trace = ag.evaluate(agent, env, builder, episodes=3, seed=6)
    assert len(rows) == 3
    assert trace is not None and trace.trajectory[0] == (0, 0)
    again, _ = ag.evaluate(agent, env, builder, episodes=3, seed=6)
    assert [m.reward for m in rows] == [m.reward for m in again]


def test_evaluate_accepts_entropy_list(mini):
    env = DataCollectionEnv(mini, fading=False, max_periods=5)
    builder = ObservationBuilder(mini)
    agent = ag.make_agent("tdma", builder.obs_dim, 2, small_cfg(), seed=4)
    rows, _ = ag.evaluate(agent, env, builder, episodes=2, seed=[3, 0xE7A1])
    assert len(rows) == 2
