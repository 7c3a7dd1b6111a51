"""Command-line entry point: ``simulate``, ``align`` and ``check``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .alignment import (AlignmentError, AlignmentPlan, alignment_cost, optimize_exhaustive,
                        optimize_full_length, optimize_tone_groups, plan_violations)
from .estimation import LinkBudget
from .harness import ExperimentConfig, _seeds, build_scene, emit_results, run_experiment

log = logging.getLogger("pdpalign")


def _load(path: str, seed: int | None):
    with open(path) as fh:
        raw = json.load(fh)
    plan = raw.pop("plan", None)
    config = ExperimentConfig.from_dict(raw)
    if seed is not None:
        config = replace(config, master_seed=seed)
    return config, plan


def _scene_for_run0(config: ExperimentConfig):
    geo_seed, _ = _seeds(config, 0)
    return build_scene(config, geo_seed)


def cmd_simulate(args) -> int:
    config, _ = _load(args.config, args.seed)
    if args.runs is not None:
        config = replace(config, n_runs=args.runs)
    records = run_experiment(config)
    emit_results(records, args.out, args.format, config)
    log.info("wrote %d records to %s", len(records), args.out)
    return 0


def cmd_align(args) -> int:
    config, _ = _load(args.config, args.seed)
    scheme = args.scheme or config.optimizer
    if scheme == "tone_group" and config.optimizer != "tone_group":
        config = replace(config, optimizer="tone_group")
    elif scheme in ("full_length", "exhaustive") and config.optimizer != "full_length":
        config = replace(config, optimizer="full_length")
    scene = _scene_for_run0(config)
    budget = LinkBudget.from_snr_db(config.snr_db)
    if scheme == "tone_group":
        plan = optimize_tone_groups(scene, budget, config.array, config.ofdm.n_groups)
    elif scheme == "full_length":
        plan = optimize_full_length(scene, budget, config.array, config.ofdm.n_cp)
    else:
        plan = optimize_exhaustive(scene, budget, config.array)
    cost = alignment_cost(plan, scene, budget, config.array)
    print(json.dumps({"plan": plan.to_dict(), "cost": cost.total}, indent=2))
    return 0


def cmd_check(args) -> int:
    config, plan_data = _load(args.config, args.seed)
    if args.plan:
        with open(args.plan) as fh:
            plan_data = json.load(fh)
        plan_data = plan_data.get("plan", plan_data)
    if plan_data is None:
        print("error: no plan given (use --plan or a 'plan' key in the config)", file=sys.stderr)
        return 2
    plan = AlignmentPlan.from_dict(plan_data)
    if plan.scheme == "tone_group" and config.optimizer != "tone_group":
        config = replace(config, optimizer="tone_group")
    elif plan.scheme != "tone_group" and config.optimizer == "tone_group":
        config = replace(config, optimizer="full_length")
    problems = plan_violations(plan, _scene_for_run0(config))
    if problems:
        for p in problems:
            print(f"violation: {p}", file=sys.stderr)
        return 1
    print("ok: intra-cell orthogonality holds")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdpalign", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")

    p = sub.add_parser("simulate", help="run the Monte-Carlo experiment")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--runs", type=int, default=None, help="override n_runs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("align", help="print the alignment plan for the first drawn scene")
    common(p)
    p.add_argument("--scheme", choices=("tone_group", "full_length", "exhaustive"), default=None)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("check", help="validate intra-cell orthogonality of a plan")
    common(p)
    p.add_argument("--plan", default=None, help="plan JSON file")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, AlignmentError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
