"""Median BA-over-NA NMSE gain as a function of per-tone SNR."""

import argparse
from dataclasses import replace

from pdpalign.harness import ExperimentConfig, median, run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None)
    parser.add_argument("--runs", type=int, default=100)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--snr", type=float, nargs="+", default=[0.0, 3.0, 5.0, 10.0, 15.0])
    args = parser.parse_args()

    base = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    base = replace(base, n_runs=args.runs, n_jobs=args.jobs, schemes=("BA", "NA", "NI"))
    print("snr_db,BA_db,NA_db,NI_db,gain_db")
    for snr in args.snr:
        records = run_experiment(replace(base, snr_db=snr))
        ba, na, ni = (median(records, s) for s in ("BA", "NA", "NI"))
        print(f"{snr:g},{ba:.4f},{na:.4f},{ni:.4f},{na - ba:.4f}")


if __name__ == "__main__":
    main()
