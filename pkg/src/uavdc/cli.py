"""Command-line interface: train, eval, sweep.

Exit codes: 0 success, 1 configuration error (bad scenario, override,
checkpoint mismatch), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .agents import AGENT_KINDS
from .harness import (OUTPUT_ROOT_ENV, SWEEP_KINDS, ConfigError, RunConfig,
                      cmd_eval, cmd_sweep, cmd_train)
from .scenario import ScenarioParseError, ScenarioValidationError


def _parse_seeds(text: str) -> tuple:
    try:
        seeds = tuple(int(tok) for tok in text.split(",") if tok.strip() != "")
    except ValueError:
        raise ConfigError(f"--seeds expects comma-separated integers, got '{text}'")
    if not seeds:
        raise ConfigError("--seeds produced an empty list")
    return seeds


def _parse_grid(text: str) -> tuple:
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            vals.append(float(tok) if ("." in tok or "e" in tok.lower()) else int(tok))
        except ValueError:
            raise ConfigError(f"grid entry '{tok}' is not a number")
    if not vals:
        raise ConfigError("grid is empty")
    return tuple(vals)


def _add_common(sp) -> None:
    sp.add_argument("--scenario", default="scenario1",
                    help="builtin name (scenario1..3) or path to a scenario YAML")
    sp.add_argument("--agent", choices=AGENT_KINDS, default="tbh")
    sp.add_argument("--episodes", type=int, default=300)
    sp.add_argument("--seeds", default="0", help="comma-separated seed list, e.g. 0,1,2")
    sp.add_argument("--eval-episodes", type=int, default=10,
                    help="greedy evaluation episodes after training (0 disables)")
    sp.add_argument("--out", default=None,
                    help=f"output root (default: ${OUTPUT_ROOT_ENV} or ./runs)")
    sp.add_argument("--set", dest="overrides", action="append", default=[],
                    metavar="KEY=VALUE",
                    help="dotted config override, e.g. physics.total_bw_hz=3.5e5, "
                         "agent.actor_lr=1e-3, reward.collision=-5, run.fading=false, "
                         "nodes.0.growth_mb=0.4")
    sp.add_argument("--no-figures", action="store_true",
                    help="skip PNG rendering; CSV outputs are always written")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="uavdc",
        description="Grid-world UAV data-collection simulator with hierarchical "
                    "DDPG training, baselines, and reproducible run outputs.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train an agent and write logs/checkpoints")
    _add_common(tr)

    ev = sub.add_parser("eval", help="evaluate a trained checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--scenario", default=None,
                    help="override scenario (must be shape-compatible with the checkpoint)")
    ev.add_argument("--episodes", type=int, default=500)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--out", default=None)
    ev.add_argument("--no-figures", action="store_true")

    sw = sub.add_parser("sweep", help="grid sweep over one scenario/agent parameter")
    sw.add_argument("--kind", required=True, choices=SWEEP_KINDS)
    sw.add_argument("--grid", default=None,
                    help="comma-separated swept values; kind-specific default otherwise")
    sw.add_argument("--inf-grid", default=None,
                    help="robustness only: comma-separated interference-uncertainty means")
    _add_common(sw)
    return p


def _run_cfg(args) -> RunConfig:
    return RunConfig(scenario=args.scenario, agent=args.agent, episodes=args.episodes,
                     seeds=_parse_seeds(args.seeds), eval_episodes=args.eval_episodes,
                     figures=not args.no_figures, out=args.out,
                     overrides=tuple(args.overrides))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            out = cmd_train(_run_cfg(args))
        elif args.command == "eval":
            out = cmd_eval(args.checkpoint, scenario=args.scenario,
                           episodes=args.episodes, seed=args.seed, out=args.out,
                           figures=not args.no_figures)
        else:
            grid = _parse_grid(args.grid) if args.grid else None
            inf_grid = _parse_grid(args.inf_grid) if args.inf_grid else None
            out = cmd_sweep(args.kind, _run_cfg(args), grid=grid, inf_grid=inf_grid)
    except (ConfigError, ScenarioParseError, ScenarioValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
