"""NMSE CDFs of BA, NA and NI for exponential and uniform delay profiles.

Writes one row per (profile, scheme, percentile) so the CDFs can be plotted
with any tool.
"""

import argparse
import csv
from dataclasses import replace

from pdpalign.harness import ExperimentConfig, nearest_rank_percentiles, run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None)
    parser.add_argument("--runs", type=int, default=1000)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="pdp_cdf.csv")
    args = parser.parse_args()

    base = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    base = replace(base, n_runs=args.runs, n_jobs=args.jobs)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["pdp", "scheme", "percent", "nmse_db"])
        for kind in ("exponential", "uniform"):
            records = run_experiment(replace(base, pdp_kind=kind))
            for scheme in ("BA", "NA", "NI"):
                values = [r.nmse_db for r in records if r.scheme == scheme]
                for p, v in zip(range(1, 100), nearest_rank_percentiles(values)):
                    writer.writerow([kind, scheme, p, f"{v:.9g}"])
                print(f"{kind:12s} {scheme}: median {nearest_rank_percentiles(values, [50])[0]:7.2f} dB")


if __name__ == "__main__":
    main()
