#!/usr/bin/env python3
"""Per-subframe SER traces of the CRC-gated post update at one SNR point."""

import argparse

import numpy as np

from onebit_mimo.adaptation import FramePlan
from onebit_mimo.harness import SimConfig, adaptive_trace_csv, run_adaptive


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-prefix", default="post_update")
    ap.add_argument("--snr-db", type=float, default=25.0)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--trials", type=int, default=24)
    ap.add_argument("--real-crc", action="store_true",
                    help="modulate and check real CRC bits instead of the genie gate")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    plan = FramePlan(d=80, n_d_sub=128, genie_crc=not args.real_crc)
    for det in ("biased-ml", "dither-ml"):
        cfg = SimConfig(snr_db_grid=(args.snr_db,), n_tr=30, n_trials=args.trials,
                        detectors=(det,), adaptive=plan, seed=args.seed)
        traces = run_adaptive(cfg, threads=args.threads)
        out = f"{args.out_prefix}_{det}.csv"
        adaptive_trace_csv(traces, out)
        errs = np.array([t.subframe_errors for t in traces])
        symbols = traces[0].symbols_per_subframe * len(traces)
        first = errs[:, :10].sum() / (10 * symbols)
        last = errs[:, -10:].sum() / (10 * symbols)
        decoded = np.mean([t.cumulative_v[-1] for t in traces])
        print(f"{det}: first-10 ser {first:.2e}, last-10 ser {last:.2e}, "
              f"decoded {decoded:.1f}/{plan.d} subframes; wrote {out}")


if __name__ == "__main__":
    main()
