"""Downlink sum spectral efficiency percentiles with estimated matched-filter precoders."""

import argparse
from dataclasses import replace

from pdpalign.harness import ExperimentConfig, nearest_rank_percentiles, run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None)
    parser.add_argument("--runs", type=int, default=1000)
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()

    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    records = run_experiment(replace(config, n_runs=args.runs, n_jobs=args.jobs))
    points = [10, 25, 50, 75, 90]
    print("scheme," + ",".join(f"p{p}" for p in points))
    for scheme in ("BA", "NA", "NI"):
        values = [r.sum_se_bits_per_tone for r in records if r.scheme == scheme]
        print(scheme + "," + ",".join(f"{v:.4f}" for v in nearest_rank_percentiles(values, points)))


if __name__ == "__main__":
    main()
