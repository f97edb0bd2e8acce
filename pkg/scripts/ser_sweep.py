#!/usr/bin/env python3
"""SER vs SNR for every detector at the default desk-scale configuration.

Writes the sweep CSV and prints a per-detector summary table.
"""

import argparse
import collections

from onebit_mimo.harness import SimConfig, run_ser_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="ser_sweep.csv")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--n-tr", type=int, default=50)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--data-per-trial", type=int, default=2000)
    ap.add_argument("--sigma2-ratio", type=float, default=0.5)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    cfg = SimConfig(
        snr_db_grid=tuple(float(g) for g in range(-10, 31, 5)),
        n_tr=args.n_tr,
        n_trials=args.trials,
        n_data_per_trial=args.data_per_trial,
        sigma2_ratio=args.sigma2_ratio,
        detectors=("csi-ml", "naive-ml", "biased-ml", "dither-ml",
                   "dither-ml-est-snr", "zf"),
        seed=args.seed,
        output_path=args.out,
    )
    res = run_ser_sweep(cfg, threads=args.threads)
    res.to_csv(args.out)

    by_det = collections.defaultdict(dict)
    for r in res.rows:
        by_det[r.detector][r.snr_db] = r.ser
    header = "snr_db " + " ".join(f"{d:>18s}" for d in cfg.detectors)
    print(header)
    for g in cfg.snr_db_grid:
        print(f"{g:6.1f} " + " ".join(f"{by_det[d][g]:18.6f}" for d in cfg.detectors))
    print(f"\nwrote {args.out}")


if __name__ == "__main__":
    main()
