"""Command-line entry points: run, eval, verify-equilibrium, plot-data,
validate-config."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, ContractViolationError, NoPureEquilibriumError
from .harness import evaluate_checkpoint, run_experiment
from .stackelberg import (
    EquilibriumTolerance,
    FiniteStackelbergGame,
    brute_force_stackelberg,
    verify_ssmne,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="harvestgov",
        description="Governed commons simulator: voting, taxation, and learning agents.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a training experiment")
    p_run.add_argument("--config", required=True, help="YAML config path")
    p_run.add_argument("--seed", required=True, type=int)
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--render", action="store_true", help="ASCII frames at tax boundaries")
    p_run.add_argument("--resume", default=None, help="checkpoint to resume from")
    p_run.add_argument("--events", default=None, help="write a JSONL event log here")

    p_eval = sub.add_parser("eval", help="frozen-policy rollouts from a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--episodes", required=True, type=int)
    p_eval.add_argument("--seed", type=int, default=0)

    p_ver = sub.add_parser("verify-equilibrium", help="check a finite game profile")
    p_ver.add_argument("--game", required=True, help="game file (text format)")
    p_ver.add_argument("--epsilon", required=True, type=float)
    p_ver.add_argument("--delta", required=True, type=float)
    p_ver.add_argument("--leader", type=int, default=None, help="candidate leader action")
    p_ver.add_argument(
        "--profile", default=None, help="candidate follower profile, e.g. '1,0'"
    )

    p_plot = sub.add_parser("plot-data", help="tidy long-format CSV from a run directory")
    p_plot.add_argument("--out", required=True, help="run output directory (reads metrics.csv)")

    p_val = sub.add_parser("validate-config", help="strict config check")
    p_val.add_argument("--config", required=True)
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    run_experiment(
        config,
        args.seed,
        args.out,
        render=args.render,
        resume_from=args.resume,
        events_path=args.events,
    )
    return 0


def _cmd_eval(args) -> int:
    results = evaluate_checkpoint(args.checkpoint, args.episodes, seed=args.seed)
    json.dump(results, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def _cmd_verify(args) -> int:
    game = FiniteStackelbergGame.load(args.game)
    tol = EquilibriumTolerance(args.epsilon, args.delta)
    if (args.leader is None) != (args.profile is None):
        print("error: --leader and --profile must be given together", file=sys.stderr)
        return 2
    if args.leader is None:
        solution = brute_force_stackelberg(game, args.delta)
        leader, profile = solution.leader_action, solution.profile
        print(
            f"solved: leader action {leader}, profile {list(profile)}, "
            f"leader value {solution.leader_value!r}"
        )
    else:
        leader = args.leader
        profile = tuple(int(tok) for tok in args.profile.split(","))
    result = verify_ssmne(game, leader, profile, tol)
    print(f"SSMNE: {'true' if result.passed else 'false'}")
    if result.witness is not None:
        w = result.witness
        print(
            f"violated ({w.side}): achieved {w.achieved!r} < "
            f"attainable {w.attainable!r} - slack {w.slack!r}"
            + (f" [follower {w.follower}, deviation {list(w.deviation)}]" if w.side == "follower" else f" [better pair {w.deviation}]")
        )
    return 0 if result.passed else 1


def _cmd_plot_data(args) -> int:
    run_dir = Path(args.out)
    metrics_path = run_dir / "metrics.csv"
    if not metrics_path.exists():
        print(f"error: no metrics.csv in {run_dir}", file=sys.stderr)
        return 2
    out_path = run_dir / "plot_data.csv"
    with open(metrics_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        phi_cols = [f for f in fields if f.startswith("phi_")]
        agent_series = ("apples", "tax_paid", "redistribution", "mixed_reward")
        shared_series = ("eta", "welfare", "principal_reward") + tuple(phi_cols)
        with open(out_path, "w", newline="", encoding="utf-8") as out_fh:
            writer = csv.writer(out_fh)
            writer.writerow(["round", "period", "agent", "series", "value"])
            for row in reader:
                for series in agent_series:
                    writer.writerow(
                        [row["round"], row["period"], row["agent"], series, row[series]]
                    )
                if row["agent"] == "0":
                    for series in shared_series:
                        writer.writerow([row["round"], row["period"], "", series, row[series]])
    print(f"wrote {out_path}")
    return 0


def _cmd_validate(args) -> int:
    load_config(args.config)
    print("config OK")
    return 0


def cli_dispatch(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    handlers = {
        "run": _cmd_run,
        "eval": _cmd_eval,
        "verify-equilibrium": _cmd_verify,
        "plot-data": _cmd_plot_data,
        "validate-config": _cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NoPureEquilibriumError, ContractViolationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
