"""Command-line front end: run, sweep, couple-test, bandit.

Exit codes: 0 success, 2 configuration error, 3 invariant violation mid-run.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .adversaries import tilted_smooth_probs
from .bandit import run_bandit_experiment
from .core import FiniteMeasure, GroundSet, make_rng
from .coupling import CouplingConfig, concentrated_p, validate_coupling
from .harness import (
    ConfigError,
    ExperimentConfig,
    InvariantViolation,
    run_experiment,
    sweep,
    sweep_to_long_csv,
)


def _parse_values(text: str, param: str) -> list:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if param == "T" or param == "k":
        return [int(p) for p in parts]
    if param == "sigma":
        return [float(p) for p in parts]
    return parts


def cmd_run(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    summary = run_experiment(cfg)
    json.dump(summary.to_dict(), sys.stdout, indent=2)
    print()
    return 0


def cmd_sweep(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    values = _parse_values(args.values, args.param)
    summaries = sweep(cfg, args.param, values)
    csv_text = sweep_to_long_csv(args.param, values, summaries)
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"sweep_{args.param}.csv").write_text(csv_text)
    sys.stdout.write(csv_text)
    return 0


def cmd_couple_test(args) -> int:
    ground = GroundSet(size=args.atoms)
    mu = FiniteMeasure.uniform(ground)
    if args.concentrated:
        p = concentrated_p(mu, args.sigma)
    elif args.sigma >= 1.0:
        p = mu.probs.copy()
    else:
        p = tilted_smooth_probs(mu.probs, args.sigma)
    config = CouplingConfig(mu_probs=mu.probs, p_probs=p, sigma=args.sigma, k=args.k)
    report = validate_coupling(config, args.trials, make_rng(args.seed, 0))
    json.dump(report.to_dict(), sys.stdout, indent=2)
    print()
    return 0


def cmd_bandit(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    summary = run_bandit_experiment(raw)
    json.dump(summary, sys.stdout, indent=2)
    print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smoothol",
                                     description="smoothed online learning experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("--config", required=True)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a config across parameter values")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--param", required=True)
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.set_defaults(func=cmd_sweep)

    p_couple = sub.add_parser("couple-test", help="validate the coupling construction")
    p_couple.add_argument("--sigma", type=float, required=True)
    p_couple.add_argument("--k", type=int, required=True)
    p_couple.add_argument("--trials", type=int, default=100_000)
    p_couple.add_argument("--atoms", type=int, default=10)
    p_couple.add_argument("--seed", type=int, default=0)
    p_couple.add_argument("--concentrated", action="store_true",
                          help="use the tight concentrated-p construction")
    p_couple.set_defaults(func=cmd_couple_test)

    p_bandit = sub.add_parser("bandit", help="run the SquareCB reduction")
    p_bandit.add_argument("--config", required=True)
    p_bandit.set_defaults(func=cmd_bandit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
