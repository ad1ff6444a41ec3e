"""Command-line entry points.

Exit codes: 0 success, 2 configuration error, 3 enumeration budget exceeded
or the tuning phase reported likely infeasibility / budget exhaustion.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import BudgetExceeded, ConfigInvalid, RiskgradError
from .harness import ExperimentConfig, load_returns_csv, run_experiment, summarize
from .mdp import load_mdp
from .oracle import discretize, exact_gradients, exact_lagrangian, value_iteration
from .augmented import AugmentedMdp
from .policies import BoltzmannPolicy, PolicyParams, TabularFeatures
from .risk import SampleBatch

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riskgrad")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="tune an algorithm and evaluate the result")
    run_p.add_argument("--config", type=Path, help="JSON config (ExperimentConfig fields)")
    run_p.add_argument("--out", type=Path, required=True, help="output directory")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--preset", choices=("paper", "desk"), default=None)

    sum_p = sub.add_parser("summarize", help="summary statistics of a returns CSV")
    sum_p.add_argument("returns", type=Path)
    sum_p.add_argument("--alpha", type=float, default=0.95)

    oracle_p = sub.add_parser("oracle", help="exact small-instance computations")
    oracle_sub = oracle_p.add_subparsers(dest="oracle_command", required=True)
    for name, hint in (
        ("lagrangian", "exact constrained objective by enumeration"),
        ("gradients", "exact gradients by enumeration"),
        ("value", "augmented value at the initial state by value iteration"),
    ):
        op = oracle_sub.add_parser(name, help=hint)
        op.add_argument("--mdp", type=Path, required=True, help="MDP JSON document")
        op.add_argument("--policy", type=Path, help="policy checkpoint JSON")
        op.add_argument("--nu", type=float, default=0.0)
        op.add_argument("--lam", type=float, default=0.0)
        op.add_argument("--alpha", type=float, default=0.95)
        op.add_argument("--beta", type=float, default=0.0)
    return parser


def _load_policy(mdp, path: Path | None) -> BoltzmannPolicy:
    features = TabularFeatures(mdp.n_states)
    policy = BoltzmannPolicy(
        features, PolicyParams.zeros(mdp.n_actions, features.dimension)
    )
    if path is not None:
        with open(path) as fh:
            policy.load_params(json.load(fh))
    return policy


def _cmd_run(args) -> int:
    if args.config is None and args.preset is None:
        print("error: provide --config and/or --preset", file=sys.stderr)
        return EXIT_CONFIG
    overrides = {}
    if args.config is not None:
        with open(args.config) as fh:
            overrides = json.load(fh)
    config = ExperimentConfig.from_dict(overrides, preset=args.preset)
    if args.seed is not None:
        config.seed = args.seed
    report = run_experiment(config, args.out)
    print(json.dumps(report.summary, sort_keys=True, indent=2))
    if report.status != "converged":
        return EXIT_BUDGET
    return EXIT_OK


def _cmd_summarize(args) -> int:
    returns = load_returns_csv(args.returns)
    row = summarize(SampleBatch(returns), args.alpha)
    print(
        json.dumps(
            {"mean": row.mean, "std": row.std, "var": row.var, "cvar": row.cvar},
            sort_keys=True,
            indent=2,
        )
    )
    return EXIT_OK


def _cmd_oracle(args) -> int:
    mdp = load_mdp(args.mdp)
    policy = _load_policy(mdp, args.policy)
    if args.oracle_command == "lagrangian":
        value = exact_lagrangian(mdp, policy, args.nu, args.lam, args.alpha, args.beta)
        print(json.dumps({"lagrangian": value}, sort_keys=True, indent=2))
    elif args.oracle_command == "gradients":
        g = exact_gradients(mdp, policy, args.nu, args.lam, args.alpha, args.beta)
        print(
            json.dumps(
                {
                    "d_nu_closed": g.d_nu_closed,
                    "d_nu_open": g.d_nu_open,
                    "d_theta": g.d_theta.ravel().tolist(),
                    "d_lambda": g.d_lambda,
                },
                sort_keys=True,
                indent=2,
            )
        )
    else:
        aug = AugmentedMdp(base=mdp, variant="cvar", alpha=args.alpha, initial_s=args.nu)
        disc = discretize(aug)
        v = value_iteration(disc, _AugAdapter(policy), args.lam)
        print(json.dumps({"value": float(v[disc.initial_id])}, sort_keys=True, indent=2))
    return EXIT_OK


class _AugAdapter:
    """Base-state policy viewed as an augmented one (budget-blind)."""

    def __init__(self, policy):
        self.policy = policy

    def probs(self, state) -> np.ndarray:
        return self.policy.probs(int(state[0]))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "summarize":
            return _cmd_summarize(args)
        return _cmd_oracle(args)
    except (ConfigInvalid, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except RiskgradError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
