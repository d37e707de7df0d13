"""Run orchestration: resolved configs, seeded runs, file outputs.

A run is fully described by a RunConfig plus the scenario it references.
`resolve` folds in `--set` overrides and produces a canonical nested dict
whose SHA-256 is the run's config hash; every output file carries that hash
(and the seed) in header comments, and re-running the same hash regenerates
the same data (the wall_ms timing column is the one value that may differ).

Outputs per training run directory:

    config.yaml              resolved config (plus hash comment)
    train_log_seed{S}.csv    episode,reward,collected_mb,lost_mb,collisions,steps,wall_ms
    checkpoint_seed{S}.npz   network + optimizer arrays with a JSON meta record
    summary.csv              per-seed reward curves, cross-seed mean and variance band
    eval.csv                 post-training greedy evaluation aggregates per seed
    *.png                    figures rendered from the CSV data (optional)
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .agents import AGENT_KINDS, AgentConfig, evaluate, make_agent, train
from .channel import RobustParams
from .env import DataCollectionEnv, RewardParams
from .observation import FeatureSpec, ObservationBuilder
from .scenario import (BUILTIN_SCENARIOS, ScenarioConfig, ScenarioValidationError,
                       builtin, load_scenario)
from .scenario import from_dict as scenario_from_dict
from .scenario import to_dict as scenario_to_dict
from .scenario import validate as scenario_validate

OUTPUT_ROOT_ENV = "UAVDC_OUT"
EVAL_STREAM_TAG = 0xE7A1  # keeps evaluation seeding disjoint from training
ALLOCATION_WINDOW_SLOTS = 12


class ConfigError(ValueError):
    """Bad run configuration, override path, or checkpoint mismatch."""


@dataclass
class RunConfig:
    """User-facing knobs for one train/eval run before resolution."""

    scenario: str = "scenario1"
    agent: str = "tbh"
    episodes: int = 300
    seeds: tuple = (0,)
    eval_episodes: int = 10
    fading: bool = True
    csi_delta_db: float = 0.0
    inf_mean: float = 0.0
    max_periods: int = 200
    return_penalty_recurs: bool = True
    figures: bool = True
    out: str | None = None
    overrides: tuple = ()
    agent_cfg: AgentConfig = field(default_factory=AgentConfig)
    rewards: RewardParams = field(default_factory=RewardParams)


@dataclass
class ResolvedRun:
    """RunConfig after overrides, with the scenario loaded and the hash fixed."""

    run: dict
    scenario: ScenarioConfig
    agent_cfg: AgentConfig
    rewards: RewardParams
    feature: FeatureSpec
    resolved: dict
    hash: str
    figures: bool
    out: str | None

    @property
    def hash8(self) -> str:
        return self.hash[:8]


def _set_path(root, dotted: str, value) -> None:
    tokens = dotted.split(".")
    node = root
    for i, tok in enumerate(tokens):
        last = i == len(tokens) - 1
        if isinstance(node, list):
            try:
                idx = int(tok)
            except ValueError:
                raise ConfigError(f"list index expected in override path '{dotted}', got '{tok}'")
            if not 0 <= idx < len(node):
                raise ConfigError(f"override path '{dotted}': index {idx} out of range")
            if last:
                node[idx] = value
            else:
                node = node[idx]
        elif isinstance(node, dict):
            if tok not in node:
                raise ConfigError(f"override path '{dotted}': unknown key '{tok}'")
            if last:
                node[tok] = value
            else:
                node = node[tok]
        else:
            raise ConfigError(f"override path '{dotted}': '{tok}' is not inside a container")


def _parse_override(item: str):
    if "=" not in item:
        raise ConfigError(f"override '{item}' is not of the form key=value")
    key, _, raw = item.partition("=")
    key = key.strip()
    if not key:
        raise ConfigError(f"override '{item}' has an empty key")
    # plain numbers first: YAML would keep '3e-4' (no dot) as a string
    try:
        return key, int(raw)
    except ValueError:
        pass
    try:
        return key, float(raw)
    except ValueError:
        pass
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override '{item}': unparseable value ({exc})")
    return key, value


def _load_scenario_ref(ref: str) -> ScenarioConfig:
    if ref in BUILTIN_SCENARIOS:
        return builtin(ref)
    path = Path(ref)
    if not path.exists():
        raise ConfigError(f"scenario '{ref}' is neither a builtin "
                          f"({', '.join(BUILTIN_SCENARIOS)}) nor an existing file")
    return load_scenario(path)


def _coerce_agent_cfg(d: dict) -> AgentConfig:
    d = dict(d)
    d["hidden"] = tuple(int(v) for v in d["hidden"])
    cfg = AgentConfig(**d)
    if cfg.update_warmup not in ("batch", "full"):
        raise ConfigError("agent.update_warmup must be 'batch' or 'full'")
    if cfg.batch_size < 1 or cfg.buffer_capacity < cfg.batch_size:
        raise ConfigError("agent buffer_capacity must be >= batch_size >= 1")
    return cfg


def resolve(cfg: RunConfig) -> ResolvedRun:
    """Apply overrides, load and validate the scenario, compute the hash."""

    if cfg.agent not in AGENT_KINDS:
        raise ConfigError(f"unknown agent '{cfg.agent}' (have: {', '.join(AGENT_KINDS)})")
    if cfg.episodes < 1:
        raise ConfigError("episodes must be >= 1")
    if not cfg.seeds:
        raise ConfigError("at least one seed is required")
    if cfg.eval_episodes < 0:
        raise ConfigError("eval_episodes must be >= 0")

    scenario_d = scenario_to_dict(_load_scenario_ref(cfg.scenario))
    run_d = {
        "scenario": cfg.scenario,
        "agent": cfg.agent,
        "episodes": int(cfg.episodes),
        "seeds": [int(s) for s in cfg.seeds],
        "eval_episodes": int(cfg.eval_episodes),
        "fading": bool(cfg.fading),
        "csi_delta_db": float(cfg.csi_delta_db),
        "inf_mean": float(cfg.inf_mean),
        "max_periods": int(cfg.max_periods),
        "return_penalty_recurs": bool(cfg.return_penalty_recurs),
    }
    agent_d = asdict(cfg.agent_cfg)
    reward_d = asdict(cfg.rewards)

    for item in cfg.overrides:
        key, value = _parse_override(item)
        head, _, rest = key.partition(".")
        if head == "run":
            if rest in ("scenario", "agent"):
                raise ConfigError(f"override '{key}': use the --{rest} flag; overriding "
                                  "it here would desync the loaded configuration")
            _set_path(run_d, rest, value)
        elif head == "agent":
            _set_path(agent_d, rest, value)
        elif head == "reward":
            _set_path(reward_d, rest, value)
        elif head == "rotor":
            _set_path(scenario_d, f"physics.rotor.{rest}", value)
        elif head in scenario_d:
            _set_path(scenario_d, key, value)
        else:
            raise ConfigError(f"override '{key}': unknown namespace '{head}'")

    try:
        scenario = scenario_from_dict(scenario_d)
        scenario_validate(scenario)
    except (ScenarioValidationError, ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid scenario after overrides: {exc}")

    agent_cfg = _coerce_agent_cfg(agent_d)
    rewards = RewardParams(**reward_d)
    feature = FeatureSpec()
    if run_d["episodes"] < 1 or not run_d["seeds"]:
        raise ConfigError("episodes must be >= 1 and seeds nonempty")

    resolved = {
        "run": run_d,
        "agent": asdict(agent_cfg),
        "reward": asdict(rewards),
        "scenario": scenario_to_dict(scenario),
        "feature": asdict(feature),
    }
    digest = config_hash(resolved)
    return ResolvedRun(run=run_d, scenario=scenario, agent_cfg=agent_cfg, rewards=rewards,
                       feature=feature, resolved=resolved, hash=digest,
                       figures=cfg.figures, out=cfg.out)


def config_hash(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":"), default=list)
    return hashlib.sha256(blob.encode()).hexdigest()


def default_out_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def run_dir_for(rr: ResolvedRun) -> Path:
    root = Path(rr.out) if rr.out else default_out_root()
    return root / f"{rr.run['agent']}_{rr.scenario.name}_{rr.hash8}"


def make_env(rr: ResolvedRun) -> DataCollectionEnv:
    csi, inf_mean = rr.run["csi_delta_db"], rr.run["inf_mean"]
    robust = RobustParams(csi, inf_mean) if (csi > 0 or inf_mean > 0) else None
    return DataCollectionEnv(rr.scenario, rewards=rr.rewards, fading=rr.run["fading"],
                             robust=robust, max_periods=rr.run["max_periods"],
                             return_penalty_recurs=rr.run["return_penalty_recurs"])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_csv(path, columns, rows, comments=()) -> None:
    with open(path, "w", newline="\n") as f:
        for c in comments:
            f.write(f"# {c}\n")
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _eval_aggregate(metrics) -> dict:
    n = max(len(metrics), 1)
    return {
        "episodes": len(metrics),
        "mean_reward": float(np.mean([m.reward for m in metrics])) if metrics else 0.0,
        "std_reward": float(np.std([m.reward for m in metrics])) if metrics else 0.0,
        "mean_collected_mb": float(np.mean([m.collected_mb for m in metrics])) if metrics else 0.0,
        "mean_lost_mb": float(np.mean([m.lost_mb for m in metrics])) if metrics else 0.0,
        "mean_collisions": float(np.mean([m.collisions for m in metrics])) if metrics else 0.0,
        "landed_rate": sum(1 for m in metrics if m.landed) / n,
        "crashed_rate": sum(1 for m in metrics if m.crashed) / n,
        "mean_periods": float(np.mean([m.periods for m in metrics])) if metrics else 0.0,
        "mean_energy_spent": float(np.mean([m.energy_spent for m in metrics])) if metrics else 0.0,
    }


EVAL_AGG_COLUMNS = ("episodes", "mean_reward", "std_reward", "mean_collected_mb",
                    "mean_lost_mb", "mean_collisions", "landed_rate", "crashed_rate",
                    "mean_periods", "mean_energy_spent")


def save_checkpoint(path, agent, rr: ResolvedRun, seed: int) -> None:
    meta, arrays = agent.state_dict()
    meta.update({
        "scenario": rr.resolved["scenario"],
        "feature": rr.resolved["feature"],
        "feature_hash": rr.feature.spec_hash(),
        "config_hash": rr.hash,
        "seed": int(seed),
        "agent_cfg": rr.resolved["agent"],
        "reward": rr.resolved["reward"],
        "run": rr.run,
        "rng_update_state": json.loads(json.dumps(agent._rng_update.bit_generator.state)),
    })
    np.savez(path, __meta__=np.array(json.dumps(meta)), **arrays)


@dataclass
class CheckpointBundle:
    agent: object
    scenario: ScenarioConfig
    feature: FeatureSpec
    meta: dict

    def make_builder(self) -> ObservationBuilder:
        return ObservationBuilder(self.scenario, self.feature)

    def make_env(self) -> DataCollectionEnv:
        run = self.meta["run"]
        csi, inf_mean = run["csi_delta_db"], run["inf_mean"]
        robust = RobustParams(csi, inf_mean) if (csi > 0 or inf_mean > 0) else None
        return DataCollectionEnv(self.scenario, rewards=RewardParams(**self.meta["reward"]),
                                 fading=run["fading"], robust=robust,
                                 max_periods=run["max_periods"],
                                 return_penalty_recurs=run["return_penalty_recurs"])


def load_checkpoint(path) -> CheckpointBundle:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as npz:
        meta = json.loads(str(npz["__meta__"][()]))
        arrays = {k: npz[k] for k in npz.files if k != "__meta__"}
    scenario = scenario_from_dict(meta["scenario"])
    scenario_validate(scenario)
    feature = FeatureSpec(**{k: tuple(v) if isinstance(v, list) else v
                             for k, v in meta["feature"].items()})
    if feature.spec_hash() != meta["feature_hash"]:
        raise ConfigError("checkpoint feature-extractor hash does not match this code; "
                          "the observation pipeline has changed")
    builder = ObservationBuilder(scenario, feature)
    if builder.obs_dim != meta["obs_dim"]:
        raise ConfigError(f"checkpoint expects obs_dim={meta['obs_dim']}, scenario "
                          f"yields {builder.obs_dim}")
    agent = make_agent(meta["kind"], meta["obs_dim"], meta["n_nodes"],
                       _coerce_agent_cfg(meta["agent_cfg"]), seed=0)
    agent.load_state_dict(arrays)
    agent._rng_update.bit_generator.state = meta["rng_update_state"]
    return CheckpointBundle(agent=agent, scenario=scenario, feature=feature, meta=meta)


def _execute(rr: ResolvedRun, run_dir: Path | None = None) -> dict:
    """Train per seed, write the run directory, return per-seed results."""

    run_dir = run_dir or run_dir_for(rr)
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "config.yaml", "w") as f:
        f.write(f"# config_hash={rr.hash}\n")
        yaml.safe_dump(rr.resolved, f, sort_keys=True)

    episodes = rr.run["episodes"]
    per_seed = {}
    for seed in rr.run["seeds"]:
        env = make_env(rr)
        builder = ObservationBuilder(rr.scenario, rr.feature)
        agent = make_agent(rr.run["agent"], builder.obs_dim, len(rr.scenario.nodes),
                           rr.agent_cfg, seed=seed)
        log_path = run_dir / f"train_log_seed{seed}.csv"
        with open(log_path, "w", newline="\n") as f:
            f.write(f"# config_hash={rr.hash}\n# seed={seed}\n")
            f.write("episode,reward,collected_mb,lost_mb,collisions,steps,wall_ms\n")

            def on_row(row, _f=f):
                _f.write(f"{row.episode},{_fmt(row.reward)},{_fmt(row.collected_mb)},"
                         f"{_fmt(row.lost_mb)},{row.collisions},{row.steps},"
                         f"{_fmt(round(row.wall_ms, 3))}\n")

            rows = train(agent, env, builder, episodes, seed, on_episode=on_row)

        ckpt_path = run_dir / f"checkpoint_seed{seed}.npz"
        save_checkpoint(ckpt_path, agent, rr, seed)

        eval_rows = []
        if rr.run["eval_episodes"] > 0:
            eval_rows, _ = evaluate(agent, env, builder, rr.run["eval_episodes"],
                                    seed=[seed, EVAL_STREAM_TAG])
        per_seed[seed] = {
            "train_rewards": np.array([r.reward for r in rows]),
            "train_lost": np.array([r.lost_mb for r in rows]),
            "train_collected": np.array([r.collected_mb for r in rows]),
            "eval": _eval_aggregate(eval_rows),
            "checkpoint_bytes": os.path.getsize(ckpt_path),
            "flops_per_period": agent.flops_per_period(env.n_slots),
        }

    seeds = list(rr.run["seeds"])
    curves = np.stack([per_seed[s]["train_rewards"] for s in seeds])
    mean = curves.mean(axis=0)
    var = curves.var(axis=0)
    lo, hi = mean - 0.5 * var, mean + 0.5 * var
    write_csv(run_dir / "summary.csv",
              ["episode", *[f"reward_seed{s}" for s in seeds],
               "mean_reward", "band_lo", "band_hi"],
              [(ep, *[curves[i, ep] for i in range(len(seeds))], mean[ep], lo[ep], hi[ep])
               for ep in range(episodes)],
              comments=[f"config_hash={rr.hash}",
                        "band is mean +/- 0.5*variance across seeds"])

    if rr.run["eval_episodes"] > 0:
        rows = [(str(s), *[per_seed[s]["eval"][c] for c in EVAL_AGG_COLUMNS]) for s in seeds]
        overall = ["all"]
        for c in EVAL_AGG_COLUMNS:
            vals = [per_seed[s]["eval"][c] for s in seeds]
            overall.append(sum(vals) if c == "episodes" else float(np.mean(vals)))
        rows.append(tuple(overall))
        write_csv(run_dir / "eval.csv", ["seed", *EVAL_AGG_COLUMNS], rows,
                  comments=[f"config_hash={rr.hash}"])

    if rr.figures:
        from . import figures
        figures.save_training_curves(run_dir / "train_curve.png",
                                     {s: per_seed[s]["train_rewards"] for s in seeds},
                                     mean, lo, hi)
    return {"run_dir": run_dir, "per_seed": per_seed}


def cmd_train(cfg: RunConfig) -> Path:
    rr = resolve(cfg)
    return _execute(rr)["run_dir"]


def _allocation_windows(fracs: np.ndarray) -> np.ndarray:
    n = fracs.shape[0]
    w = (n + ALLOCATION_WINDOW_SLOTS - 1) // ALLOCATION_WINDOW_SLOTS
    return np.stack([fracs[i * ALLOCATION_WINDOW_SLOTS:(i + 1) * ALLOCATION_WINDOW_SLOTS].mean(axis=0)
                     for i in range(w)])


def cmd_eval(checkpoint, scenario: str | None = None, episodes: int = 500,
             seed: int = 0, out: str | None = None, figures: bool = True) -> Path:
    if episodes < 1:
        raise ConfigError("eval episodes must be >= 1")
    bundle = load_checkpoint(checkpoint)
    scen = bundle.scenario
    if scenario is not None:
        scen = _load_scenario_ref(scenario)
        scenario_validate(scen)
        if len(scen.nodes) != bundle.meta["n_nodes"]:
            raise ConfigError(f"checkpoint was trained with {bundle.meta['n_nodes']} nodes, "
                              f"scenario '{scenario}' has {len(scen.nodes)}")
        probe = ObservationBuilder(scen, bundle.feature)
        if probe.obs_dim != bundle.meta["obs_dim"]:
            raise ConfigError("scenario grid size is incompatible with the checkpoint's "
                              "observation dimension")
        bundle = CheckpointBundle(agent=bundle.agent, scenario=scen,
                                  feature=bundle.feature, meta=bundle.meta)
    env = bundle.make_env()
    builder = bundle.make_builder()
    metrics, trace = evaluate(bundle.agent, env, builder, episodes,
                              seed=[seed, EVAL_STREAM_TAG])

    out_dir = Path(out) if out else Path(checkpoint).parent / f"eval_{scen.name}_{episodes}ep"
    out_dir.mkdir(parents=True, exist_ok=True)
    tag = [f"config_hash={bundle.meta['config_hash']}", f"seed={seed}"]

    write_csv(out_dir / "eval_metrics.csv",
              ["episode", "reward", "collected_mb", "lost_mb", "collisions",
               "periods", "energy_spent", "landed", "crashed"],
              [(i, m.reward, m.collected_mb, m.lost_mb, m.collisions, m.periods,
                m.energy_spent, m.landed, m.crashed) for i, m in enumerate(metrics)],
              comments=tag)
    agg = _eval_aggregate(metrics)
    write_csv(out_dir / "eval_summary.csv", list(EVAL_AGG_COLUMNS),
              [tuple(agg[c] for c in EVAL_AGG_COLUMNS)], comments=tag)

    node_cols = [f"node{i}" for i in range(len(scen.nodes))]
    if trace and trace.collected:
        cum = np.cumsum(np.stack(trace.collected), axis=0)
        write_csv(out_dir / "collection_trace.csv", ["slot", *node_cols],
                  [(i, *cum[i]) for i in range(cum.shape[0])], comments=tag)
        windows = _allocation_windows(np.stack(trace.fractions))
        write_csv(out_dir / "allocation_windows.csv", ["window", *node_cols],
                  [(i, *windows[i]) for i in range(windows.shape[0])], comments=tag)
    else:
        cum = windows = None
    write_csv(out_dir / "trajectory.csv", ["step", "x", "y"],
              [(i, c[0], c[1]) for i, c in enumerate(trace.trajectory)], comments=tag)

    if figures:
        from . import figures as figs
        figs.save_trajectory_map(out_dir / "trajectory.png", scen, trace.trajectory)
        if cum is not None:
            figs.save_collection_trace(out_dir / "collection.png", cum)
            figs.save_allocation_windows(out_dir / "allocation.png", windows,
                                         ALLOCATION_WINDOW_SLOTS)
    return out_dir


SWEEP_KINDS = ("data_growth", "node_count", "robustness", "hidden_size")
DEFAULT_GRIDS = {
    "data_growth": (0.1, 0.2, 0.3),
    "node_count": (5, 7, 9),
    "robustness": (0.0, 2.0, 4.0, 6.0),  # CSI uncertainty span in dB
    "hidden_size": (128, 256, 512, 1024),
}
ROBUST_BW_HZ = 3.5e5
ROBUST_DEFAULT_INF_GRID = (0.0,)
CONVERGED_WINDOW = 100
NODE_PLACEMENT_TAG = 0x90DE


def _grown_nodes(scenario_d: dict, count: int) -> list:
    """Node list resized to `count`: truncate from the tail, or add template
    nodes on seeded free cells (not blocked, not already occupied)."""

    nodes = copy.deepcopy(scenario_d["nodes"])
    if count <= len(nodes):
        return nodes[:count]
    y = scenario_d["grid"]["y_cells"]
    blocked = set()
    for zone in scenario_d["zones"]:
        if zone["kind"] in ("no_fly", "combined"):
            blocked.update((int(c[0]), int(c[1])) for c in zone["cells"])
    occupied = {tuple(int(v) for v in n["cell"]) for n in nodes}
    occupied |= {tuple(int(v) for v in j["cell"]) for j in scenario_d["jammers"]}
    free = [(x, yy) for x in range(y) for yy in range(y)
            if (x, yy) not in blocked and (x, yy) not in occupied]
    need = count - len(nodes)
    if need > len(free):
        raise ConfigError(f"cannot place {need} extra nodes: only {len(free)} free cells")
    rng = np.random.default_rng(np.random.SeedSequence([NODE_PLACEMENT_TAG, count]))
    picks = rng.choice(len(free), size=need, replace=False)
    template = {"init_data_mb": 50.0, "capacity_mb": 65.0, "growth_mb": 0.2,
                "tx_power_w": 0.1}
    for p in picks:
        nodes.append({"cell": list(free[int(p)]), **template})
    return nodes


def _sweep_points(kind: str, grid, inf_grid, base: ResolvedRun, keep_bw: bool = False):
    """Yield (label, key_columns, resolved run) per grid point."""

    base_d = base.resolved
    for value in grid:
        run_d = copy.deepcopy(base_d["run"])
        agent_d = copy.deepcopy(base_d["agent"])
        reward_d = copy.deepcopy(base_d["reward"])
        scen_d = copy.deepcopy(base_d["scenario"])
        if kind == "data_growth":
            for node in scen_d["nodes"]:
                node["growth_mb"] = float(value)
            yield (f"growth{value:g}", {"growth_mb": float(value)},
                   _resolve_parts(run_d, agent_d, reward_d, scen_d, base))
        elif kind == "node_count":
            scen_d["nodes"] = _grown_nodes(scen_d, int(value))
            yield (f"nodes{int(value)}", {"n_nodes": int(value)},
                   _resolve_parts(run_d, agent_d, reward_d, scen_d, base))
        elif kind == "hidden_size":
            agent_d["hidden"] = [int(value), int(value)]
            yield (f"hidden{int(value)}", {"hidden": int(value)},
                   _resolve_parts(run_d, agent_d, reward_d, scen_d, base))
        elif kind == "robustness":
            if not keep_bw:
                scen_d["physics"]["total_bw_hz"] = ROBUST_BW_HZ
            run_d["csi_delta_db"] = float(value)
            for inf_mean in inf_grid:
                rd = copy.deepcopy(run_d)
                rd["inf_mean"] = float(inf_mean)
                yield (f"csi{value:g}_inf{inf_mean:g}",
                       {"csi_delta_db": float(value), "inf_mean": float(inf_mean)},
                       _resolve_parts(rd, copy.deepcopy(agent_d), copy.deepcopy(reward_d),
                                      copy.deepcopy(scen_d), base))
        else:
            raise ConfigError(f"unknown sweep kind '{kind}' (have: {', '.join(SWEEP_KINDS)})")


def _resolve_parts(run_d, agent_d, reward_d, scen_d, base: ResolvedRun) -> ResolvedRun:
    scenario = scenario_from_dict(scen_d)
    scenario_validate(scenario)
    agent_cfg = _coerce_agent_cfg(agent_d)
    rewards = RewardParams(**reward_d)
    resolved = {"run": run_d, "agent": asdict(agent_cfg), "reward": asdict(rewards),
                "scenario": scenario_to_dict(scenario), "feature": asdict(base.feature)}
    return ResolvedRun(run=run_d, scenario=scenario, agent_cfg=agent_cfg, rewards=rewards,
                       feature=base.feature, resolved=resolved, hash=config_hash(resolved),
                       figures=base.figures, out=base.out)


def cmd_sweep(kind: str, cfg: RunConfig, grid=None, inf_grid=None) -> Path:
    if kind not in SWEEP_KINDS:
        raise ConfigError(f"unknown sweep kind '{kind}' (have: {', '.join(SWEEP_KINDS)})")
    grid = DEFAULT_GRIDS[kind] if grid is None else tuple(grid)
    if not grid:
        raise ConfigError("sweep grid must be nonempty")
    inf_grid = ROBUST_DEFAULT_INF_GRID if inf_grid is None else tuple(inf_grid)
    if not inf_grid:
        raise ConfigError("inf grid must be nonempty")
    base = resolve(cfg)

    sweep_id = config_hash({"base": base.resolved, "kind": kind,
                            "grid": list(grid), "inf_grid": list(inf_grid)})[:8]
    root = Path(base.out) if base.out else default_out_root()
    sweep_dir = root / f"sweep_{kind}_{base.run['agent']}_{sweep_id}"
    sweep_dir.mkdir(parents=True, exist_ok=True)

    # a user-supplied bandwidth override survives the robustness sweep's default cut
    keep_bw = any(_parse_override(o)[0] == "physics.total_bw_hz" for o in cfg.overrides)

    key_cols = None
    table = []
    labels = []
    series_vals = []
    for label, keys, rr in _sweep_points(kind, grid, inf_grid, base, keep_bw):
        result = _execute(rr, run_dir=sweep_dir / label)
        if key_cols is None:
            key_cols = list(keys)
        point_evals = []
        for seed, res in result["per_seed"].items():
            rewards = res["train_rewards"]
            window = rewards[-min(CONVERGED_WINDOW, len(rewards)):]
            q1, med, q3 = np.percentile(window, [25, 50, 75])
            row = {**keys, "seed": seed,
                   "eval_mean_reward": res["eval"]["mean_reward"],
                   "eval_mean_collected_mb": res["eval"]["mean_collected_mb"],
                   "eval_mean_lost_mb": res["eval"]["mean_lost_mb"],
                   "eval_mean_collisions": res["eval"]["mean_collisions"],
                   "train_final_mean_reward": float(window.mean()),
                   "reward_q1": float(q1), "reward_median": float(med),
                   "reward_q3": float(q3),
                   "flop_count": res["flops_per_period"],
                   "checkpoint_bytes": res["checkpoint_bytes"],
                   "config_hash8": rr.hash8}
            table.append(row)
            point_evals.append(res["eval"]["mean_collected_mb" if kind == "node_count"
                                           else "mean_lost_mb" if kind == "data_growth"
                                           else "mean_reward"])
        labels.append(label)
        series_vals.append(float(np.mean(point_evals)))

    columns = [*key_cols, "seed", "eval_mean_reward", "eval_mean_collected_mb",
               "eval_mean_lost_mb", "eval_mean_collisions", "train_final_mean_reward",
               "reward_q1", "reward_median", "reward_q3", "flop_count",
               "checkpoint_bytes", "config_hash8"]
    write_csv(sweep_dir / "sweep.csv", columns,
              [tuple(row[c] for c in columns) for row in table],
              comments=[f"sweep={kind}", f"sweep_id={sweep_id}"])

    if base.figures:
        from . import figures
        ylabel = {"node_count": "eval mean collected (Mb)",
                  "data_growth": "eval mean data loss (Mb)"}.get(kind, "eval mean reward")
        figures.save_sweep_lines(sweep_dir / "sweep.png", kind, labels,
                                 {"mean over seeds": series_vals}, ylabel)
    return sweep_dir
