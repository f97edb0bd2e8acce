#!/usr/bin/env python3
"""Average zero-probability likelihood counts vs SNR, with and without dithering."""

import argparse

from onebit_mimo.harness import SimConfig, run_zero_count_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="zero_count.csv")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--n-tr", type=int, default=50)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    cfg = SimConfig(
        snr_db_grid=tuple(float(g) for g in range(-10, 31, 5)),
        n_tr=args.n_tr,
        n_trials=args.trials,
        sigma2_ratio=1.0,
        seed=args.seed,
        output_path=args.out,
    )
    res = run_zero_count_sweep(cfg, threads=args.threads)
    res.to_csv(args.out)

    counts = {(r.detector, r.snr_db): r.mean_zero_count for r in res.rows}
    dim = 2 * cfg.nr
    print(f"snr_db  no-dither(of {dim})  dither(of {dim})")
    for g in cfg.snr_db_grid:
        print(f"{g:6.1f}  {counts[('naive-ml', g)]:17.2f}  {counts[('dither-ml', g)]:14.2f}")
    print(f"\nwrote {args.out}")


if __name__ == "__main__":
    main()
