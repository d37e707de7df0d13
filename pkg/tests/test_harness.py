import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from uavdc import cli, harness
from uavdc.agents import AgentConfig, make_agent
from uavdc.harness import (ConfigError, RunConfig, cmd_eval, cmd_sweep,
                           cmd_train, config_hash, load_checkpoint, resolve,
                           save_checkpoint, write_csv)
from uavdc.scenario import serialize

from conftest import make_mini_scenario, make_two_node_scenario


def tiny_agent_cfg():
    return AgentConfig(hidden=(8, 8), batch_size=4, buffer_capacity=64)


def mini_run_cfg(scenario_path, **kw):
    base = dict(scenario=str(scenario_path), agent="tdma", episodes=2, seeds=(0,),
                eval_episodes=1, figures=False, max_periods=4,
                agent_cfg=tiny_agent_cfg())
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture
def mini_path(tmp_path):
    p = tmp_path / "mini.yaml"
    p.write_text(serialize(make_mini_scenario()))
    return p


# --------------------------------------------------------------------- resolve

def test_resolve_defaults():
    rr = resolve(RunConfig())
    assert rr.run["scenario"] == "scenario1" and rr.run["agent"] == "tbh"
    assert rr.scenario.name == "scenario1"
    assert len(rr.hash) == 64
    assert rr.hash8 == rr.hash[:8]
    assert rr.agent_cfg.hidden == (128, 128)


def test_hash_stable_and_sensitive():
    a = resolve(RunConfig())
    b = resolve(RunConfig())
    assert a.hash == b.hash
    c = resolve(RunConfig(episodes=301))
    assert c.hash != a.hash
    # output location and figure toggles never affect identity
    d = resolve(RunConfig(out="/tmp/elsewhere", figures=False))
    assert d.hash == a.hash


def test_overrides_reach_each_namespace(mini_path):
    cfg = mini_run_cfg(mini_path, overrides=(
        "run.episodes=7",
        "agent.hidden=[32, 32]",
        "agent.actor_lr=3e-4",
        "reward.collision=-5.0",
        "rotor.blade_power_w=90.0",
        "physics.total_bw_hz=3.5e5",
        "nodes.0.growth_mb=0.5",
    ))
    rr = resolve(cfg)
    assert rr.run["episodes"] == 7
    assert rr.agent_cfg.hidden == (32, 32)
    assert rr.agent_cfg.actor_lr == 3e-4
    assert rr.rewards.collision == -5.0
    assert rr.scenario.physics.rotor.blade_power_w == 90.0
    assert rr.scenario.physics.total_bw_hz == 3.5e5
    assert rr.scenario.nodes[0].growth_mb == 0.5


@pytest.mark.parametrize("bad", [
    "run.nope=1",
    "run.scenario=scenario2",  # dedicated flag, not an override
    "run.agent=tbjn",
    "agent.widths=[1]",
    "bogus.key=1",
    "nodes.9.growth_mb=1",
    "nodes.x.growth_mb=1",
    "noequals",
    "=5",
])
def test_bad_overrides_rejected(mini_path, bad):
    with pytest.raises(ConfigError):
        resolve(mini_run_cfg(mini_path, overrides=(bad,)))


def test_invalid_scenario_after_override(mini_path):
    with pytest.raises(ConfigError):
        resolve(mini_run_cfg(mini_path, overrides=("grid.y_cells=2",)))
    with pytest.raises(ConfigError):
        resolve(mini_run_cfg(mini_path, overrides=("physics.total_bw_hz=0",)))


def test_resolve_validation_errors(mini_path):
    with pytest.raises(ConfigError):
        resolve(mini_run_cfg(mini_path, agent="dqn"))
    with pytest.raises(ConfigError):
        resolve(mini_run_cfg(mini_path, episodes=0))
    with pytest.raises(ConfigError):
        resolve(mini_run_cfg(mini_path, seeds=()))
    with pytest.raises(ConfigError):
        resolve(mini_run_cfg(mini_path, eval_episodes=-1))
    with pytest.raises(ConfigError):
        resolve(RunConfig(scenario="/nonexistent/file.yaml"))
    with pytest.raises(ConfigError):
        resolve(mini_run_cfg(mini_path, overrides=("agent.update_warmup=soon",)))
    with pytest.raises(ConfigError):
        resolve(mini_run_cfg(mini_path, overrides=("agent.batch_size=0",)))


def test_make_env_robustness_toggle(mini_path):
    rr = resolve(mini_run_cfg(mini_path))
    assert harness.make_env(rr).robust is None
    rr2 = resolve(mini_run_cfg(mini_path, csi_delta_db=4.0))
    env = harness.make_env(rr2)
    assert env.robust is not None and env.robust.csi_delta_db == 4.0
    rr3 = resolve(mini_run_cfg(mini_path, inf_mean=0.5))
    assert harness.make_env(rr3).robust.inf_mean == 0.5


def test_default_out_root_env(monkeypatch):
    monkeypatch.delenv(harness.OUTPUT_ROOT_ENV, raising=False)
    assert harness.default_out_root() == Path("runs")
    monkeypatch.setenv(harness.OUTPUT_ROOT_ENV, "/tmp/elsewhere")
    assert harness.default_out_root() == Path("/tmp/elsewhere")


# ------------------------------------------------------------------------- csv

def test_write_csv_formats(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, ["a", "b", "c", "d"],
              [(1, 0.25, True, "x"), (2, np.float64(0.1), False, "y")],
              comments=["hello"])
    text = path.read_text()
    lines = text.splitlines()
    assert lines[0] == "# hello"
    assert lines[1] == "a,b,c,d"
    assert lines[2] == "1,0.25,1,x"
    assert lines[3] == "2,0.1,0,y"  # numpy scalars print as plain floats


def test_fmt_numpy_scalars():
    assert harness._fmt(np.float64(0.1)) == "0.1"
    assert harness._fmt(np.int64(3)) == "3"
    assert harness._fmt(np.bool_(True)) == "1"
    assert harness._fmt(1.0582) == "1.0582"


# ----------------------------------------------------------------- checkpoints

def test_checkpoint_round_trip(tmp_path, mini_path):
    rr = resolve(mini_run_cfg(mini_path))
    env = harness.make_env(rr)
    builder = harness.ObservationBuilder(rr.scenario, rr.feature)
    agent = make_agent("tdma", builder.obs_dim, 2, rr.agent_cfg, seed=3)
    from uavdc.agents import train
    train(agent, env, builder, episodes=2, seed=5)

    path = tmp_path / "ck.npz"
    save_checkpoint(path, agent, rr, seed=5)
    bundle = load_checkpoint(path)
    assert bundle.meta["kind"] == "tdma"
    assert bundle.meta["seed"] == 5
    assert bundle.meta["config_hash"] == rr.hash
    assert bundle.scenario.name == rr.scenario.name

    from uavdc.agents import evaluate
    env2 = bundle.make_env()
    b2 = bundle.make_builder()
    m1, _ = evaluate(agent, env, builder, 2, seed=9)
    m2, _ = evaluate(bundle.agent, env2, b2, 2, seed=9)
    assert [m.reward for m in m1] == [m.reward for m in m2]


def _tamper(src, dst, mutate):
    with np.load(src, allow_pickle=False) as npz:
        meta = json.loads(str(npz["__meta__"][()]))
        arrays = {k: npz[k] for k in npz.files if k != "__meta__"}
    mutate(meta)
    np.savez(dst, __meta__=np.array(json.dumps(meta)), **arrays)


def test_checkpoint_feature_hash_guard(tmp_path, mini_path):
    rr = resolve(mini_run_cfg(mini_path))
    builder = harness.ObservationBuilder(rr.scenario, rr.feature)
    agent = make_agent("tdma", builder.obs_dim, 2, rr.agent_cfg, seed=0)
    src = tmp_path / "ok.npz"
    save_checkpoint(src, agent, rr, seed=0)

    bad = tmp_path / "bad_feature.npz"
    _tamper(src, bad, lambda m: m["feature"].__setitem__("seed", 1))
    with pytest.raises(ConfigError):
        load_checkpoint(bad)

    bad2 = tmp_path / "bad_dim.npz"
    _tamper(src, bad2, lambda m: m.__setitem__("obs_dim", m["obs_dim"] + 1))
    with pytest.raises(ConfigError):
        load_checkpoint(bad2)

    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "missing.npz")


# ------------------------------------------------------------------- cmd_train

def test_cmd_train_outputs(tmp_path, mini_path):
    out = tmp_path / "runs"
    run_dir = cmd_train(mini_run_cfg(mini_path, seeds=(0, 1), out=str(out)))
    assert run_dir.parent == out
    assert run_dir.name.startswith("tdma_mini_")
    for name in ["config.yaml", "train_log_seed0.csv", "train_log_seed1.csv",
                 "checkpoint_seed0.npz", "checkpoint_seed1.npz", "summary.csv",
                 "eval.csv"]:
        assert (run_dir / name).exists(), name
    assert not (run_dir / "train_curve.png").exists()  # figures disabled

    text = (run_dir / "config.yaml").read_text()
    assert text.startswith("# config_hash=")
    doc = yaml.safe_load(text)
    assert doc["run"]["episodes"] == 2
    assert config_hash(doc) == text.splitlines()[0].split("=", 1)[1]

    log = (run_dir / "train_log_seed0.csv").read_text().splitlines()
    assert log[0].startswith("# config_hash=") and log[1] == "# seed=0"
    assert log[2] == "episode,reward,collected_mb,lost_mb,collisions,steps,wall_ms"
    assert len(log) == 5  # two comment lines, header, two episodes

    evl = (run_dir / "eval.csv").read_text().splitlines()
    assert evl[1].split(",")[0] == "seed"
    assert [r.split(",")[0] for r in evl[2:]] == ["0", "1", "all"]

    summ = (run_dir / "summary.csv").read_text().splitlines()
    header = summ[2].split(",")
    assert header == ["episode", "reward_seed0", "reward_seed1", "mean_reward",
                      "band_lo", "band_hi"]


def test_cmd_train_renders_figure(tmp_path, mini_path):
    run_dir = cmd_train(mini_run_cfg(mini_path, out=str(tmp_path / "r"), figures=True))
    assert (run_dir / "train_curve.png").exists()


def strip_wall_ms(path) -> str:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            out.append(line)
        else:
            out.append(",".join(line.split(",")[:-1]))
    return "\n".join(out)


def test_cmd_train_deterministic_logs(tmp_path, mini_path):
    d1 = cmd_train(mini_run_cfg(mini_path, out=str(tmp_path / "a")))
    d2 = cmd_train(mini_run_cfg(mini_path, out=str(tmp_path / "b")))
    assert strip_wall_ms(d1 / "train_log_seed0.csv") == strip_wall_ms(d2 / "train_log_seed0.csv")
    assert (d1 / "eval.csv").read_bytes() == (d2 / "eval.csv").read_bytes()
    assert d1.name == d2.name  # same resolved config, same hash


# -------------------------------------------------------------------- cmd_eval

def test_cmd_eval_outputs(tmp_path, mini_path):
    run_dir = cmd_train(mini_run_cfg(mini_path, out=str(tmp_path / "r"),
                                     max_periods=6))
    ckpt = run_dir / "checkpoint_seed0.npz"
    out = cmd_eval(ckpt, episodes=2, seed=1, figures=True)
    assert out == run_dir / "eval_mini_2ep"
    for name in ["eval_metrics.csv", "eval_summary.csv", "collection_trace.csv",
                 "allocation_windows.csv", "trajectory.csv", "trajectory.png",
                 "collection.png", "allocation.png"]:
        assert (out / name).exists(), name

    rows = [l for l in (out / "allocation_windows.csv").read_text().splitlines()
            if not l.startswith("#")][1:]
    for row in rows:
        vals = [float(v) for v in row.split(",")[1:]]
        assert sum(vals) == pytest.approx(1.0, abs=1e-6)
        assert all(v >= 0 for v in vals)

    traj = [l for l in (out / "trajectory.csv").read_text().splitlines()
            if not l.startswith("#")][1:]
    first = traj[0].split(",")
    assert (int(first[1]), int(first[2])) == (0, 0)  # starts in the start zone

    met = [l for l in (out / "eval_metrics.csv").read_text().splitlines()
           if not l.startswith("#")]
    assert met[0].split(",")[0] == "episode"
    assert len(met) == 3


def test_cmd_eval_explicit_out(tmp_path, mini_path):
    run_dir = cmd_train(mini_run_cfg(mini_path, out=str(tmp_path / "r")))
    where = tmp_path / "picked"
    out = cmd_eval(run_dir / "checkpoint_seed0.npz", episodes=1,
                   out=str(where), figures=False)
    assert out == where
    assert (where / "eval_summary.csv").exists()
    assert not (where / "trajectory.png").exists()


def test_cmd_eval_scenario_guards(tmp_path, mini_path):
    run_dir = cmd_train(mini_run_cfg(mini_path, out=str(tmp_path / "r")))
    ckpt = run_dir / "checkpoint_seed0.npz"
    with pytest.raises(ConfigError):
        cmd_eval(ckpt, scenario="scenario1", episodes=1)  # 7 nodes vs 2
    with pytest.raises(ConfigError):
        cmd_eval(ckpt, episodes=0)
    # shape-compatible cross-scenario evaluation is allowed
    two = tmp_path / "two.yaml"
    two.write_text(serialize(make_two_node_scenario()))
    out = cmd_eval(ckpt, scenario=str(two), episodes=1,
                   out=str(tmp_path / "x"), figures=False)
    assert (out / "eval_summary.csv").exists()


def test_allocation_window_partial_tail():
    fracs = np.tile(np.array([0.25, 0.75]), (30, 1))
    win = harness._allocation_windows(fracs)
    assert win.shape == (3, 2)
    np.testing.assert_allclose(win, [[0.25, 0.75]] * 3)


# ----------------------------------------------------------------------- sweep

def test_cmd_sweep_data_growth(tmp_path, mini_path):
    cfg = mini_run_cfg(mini_path, out=str(tmp_path / "s"))
    sweep_dir = cmd_sweep("data_growth", cfg, grid=(0.1, 0.3))
    assert sweep_dir.name.startswith("sweep_data_growth_tdma_")
    assert (sweep_dir / "growth0.1" / "train_log_seed0.csv").exists()
    assert (sweep_dir / "growth0.3" / "train_log_seed0.csv").exists()
    lines = (sweep_dir / "sweep.csv").read_text().splitlines()
    assert lines[0] == "# sweep=data_growth"
    header = lines[2].split(",")
    assert header[0] == "growth_mb" and header[1] == "seed"
    assert header[-1] == "config_hash8"
    assert "flop_count" in header and "checkpoint_bytes" in header
    assert "reward_q1" in header and "reward_median" in header and "reward_q3" in header
    data = [l.split(",") for l in lines[3:]]
    assert [row[0] for row in data] == ["0.1", "0.3"]
    assert not (sweep_dir / "sweep.png").exists()


def test_cmd_sweep_renders_figure(tmp_path, mini_path):
    cfg = mini_run_cfg(mini_path, out=str(tmp_path / "s"), figures=True)
    sweep_dir = cmd_sweep("hidden_size", cfg, grid=(8,))
    assert (sweep_dir / "sweep.png").exists()


def test_cmd_sweep_rejects_bad_kind(mini_path):
    with pytest.raises(ConfigError):
        cmd_sweep("learning_rate", mini_run_cfg(mini_path))
    with pytest.raises(ConfigError):
        cmd_sweep("data_growth", mini_run_cfg(mini_path), grid=())
    with pytest.raises(ConfigError):
        cmd_sweep("robustness", mini_run_cfg(mini_path), inf_grid=())


def test_sweep_points_node_count(mini_path):
    base = resolve(mini_run_cfg(mini_path))
    pts = list(harness._sweep_points("node_count", (1, 2, 5), (0.0,), base))
    labels = [p[0] for p in pts]
    assert labels == ["nodes1", "nodes2", "nodes5"]
    n1 = pts[0][2].scenario
    assert len(n1.nodes) == 1 and n1.nodes[0].cell == base.scenario.nodes[0].cell
    n5 = pts[2][2].scenario
    assert len(n5.nodes) == 5
    blocked = {(3, 3), (5, 0)}
    occupied = {(1, 3), (4, 1), (4, 4)}
    for node in n5.nodes[2:]:
        assert node.cell not in blocked and node.cell not in occupied
        assert node.init_data_mb == 50.0 and node.capacity_mb == 65.0
    again = list(harness._sweep_points("node_count", (5,), (0.0,), base))
    assert [n.cell for n in again[0][2].scenario.nodes] == [n.cell for n in n5.nodes]


def test_sweep_points_robustness_bandwidth(mini_path):
    base = resolve(mini_run_cfg(mini_path))
    cut = list(harness._sweep_points("robustness", (0.0, 2.0), (0.0,), base))
    assert [p[0] for p in cut] == ["csi0_inf0", "csi2_inf0"]
    for _, keys, rr in cut:
        assert rr.scenario.physics.total_bw_hz == harness.ROBUST_BW_HZ
        assert rr.run["csi_delta_db"] == keys["csi_delta_db"]
    kept = list(harness._sweep_points("robustness", (2.0,), (0.5,), base, keep_bw=True))
    assert kept[0][2].scenario.physics.total_bw_hz == base.scenario.physics.total_bw_hz
    assert kept[0][2].run["inf_mean"] == 0.5


def test_sweep_points_hidden_size(mini_path):
    base = resolve(mini_run_cfg(mini_path))
    (label, keys, rr), = harness._sweep_points("hidden_size", (64,), (0.0,), base)
    assert label == "hidden64" and keys == {"hidden": 64}
    assert rr.agent_cfg.hidden == (64, 64)


# ------------------------------------------------------------------------- cli

def test_cli_train_exit_zero(tmp_path, mini_path, capsys):
    rc = cli.main(["train", "--scenario", str(mini_path), "--agent", "tdma",
                   "--episodes", "2", "--seeds", "0", "--eval-episodes", "1",
                   "--out", str(tmp_path / "o"), "--no-figures",
                   "--set", "run.max_periods=4", "--set", "agent.hidden=[8, 8]",
                   "--set", "agent.batch_size=4", "--set", "agent.buffer_capacity=64"])
    assert rc == 0
    printed = capsys.readouterr().out.strip()
    assert Path(printed).is_dir()


def test_cli_config_error_exit_one(tmp_path, mini_path, capsys):
    rc = cli.main(["train", "--scenario", str(mini_path), "--episodes", "2",
                   "--out", str(tmp_path / "o"), "--set", "bogus.key=1"])
    assert rc == 1
    assert "config error" in capsys.readouterr().err


def test_cli_runtime_error_exit_two(tmp_path, mini_path, capsys, monkeypatch):
    def boom(cfg):
        raise RuntimeError("disk on fire")
    monkeypatch.setattr(cli, "cmd_train", boom)
    rc = cli.main(["train", "--scenario", str(mini_path),
                   "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "runtime error" in capsys.readouterr().err


def test_cli_seed_and_grid_parsing():
    assert cli._parse_seeds("0,1,2") == (0, 1, 2)
    assert cli._parse_seeds(" 4 ") == (4,)
    with pytest.raises(ConfigError):
        cli._parse_seeds("a,b")
    with pytest.raises(ConfigError):
        cli._parse_seeds(",")
    assert cli._parse_grid("0.1,0.3") == (0.1, 0.3)
    assert cli._parse_grid("128,256") == (128, 256)
    assert cli._parse_grid("3.5e5") == (3.5e5,)
    with pytest.raises(ConfigError):
        cli._parse_grid("x")


def test_cli_version(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.startswith("uavdc ")
