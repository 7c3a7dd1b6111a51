"""Median NMSE of each scheme across angle spreads (same seeds for every spread)."""

import argparse
from dataclasses import replace

from pdpalign.harness import ExperimentConfig, median, run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None)
    parser.add_argument("--runs", type=int, default=200)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--spreads", type=float, nargs="+", default=[20.0, 15.0, 10.0, 5.0])
    args = parser.parse_args()

    base = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    base = replace(base, n_runs=args.runs, n_jobs=args.jobs)
    print("AS_deg,BA_db,NA_db,NI_db")
    for spread in args.spreads:
        records = run_experiment(replace(base, angle_spread_deg=spread))
        row = [median(records, s) for s in ("BA", "NA", "NI")]
        print(f"{spread:g}," + ",".join(f"{v:.4f}" for v in row))


if __name__ == "__main__":
    main()
