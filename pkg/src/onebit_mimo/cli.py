"""Command-line interface.

Subcommands: ser-sweep, zero-count, snr-train, adaptive.  Each accepts
--config (JSON), --seed, --out, and --threads; flags override config
fields.  ONEBIT_THREADS is the fallback for --threads.  Exit code 0 on
success, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from .errors import ConfigError
from .harness import (
    SimConfig,
    adaptive_trace_csv,
    load_config,
    run_adaptive,
    run_offline_snr_training,
    run_ser_sweep,
    run_zero_count_sweep,
)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (defaults apply when omitted)")
    p.add_argument("--seed", type=int, help="master 64-bit seed (overrides config)")
    p.add_argument("--out", help="output path (overrides config output_path)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes; falls back to ONEBIT_THREADS, then 1")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="onebit-mimo",
        description="Monte Carlo experiments for learning-based one-bit ML detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ser-sweep", help="symbol-error-rate sweep over the SNR grid")
    _add_common(p)
    p.add_argument("--timing", action="store_true",
                   help="fill the wall_time_ms column (breaks byte-reproducibility)")

    p = sub.add_parser("zero-count", help="zero-probability likelihood counts vs SNR")
    _add_common(p)

    p = sub.add_parser("snr-train", help="offline zero-count -> SNR regression")
    _add_common(p)

    p = sub.add_parser("adaptive", help="CRC-gated post-update session trace")
    _add_common(p)
    p.add_argument("--genie-crc", action="store_true",
                   help="treat a subframe as decoded iff every vector is correct")
    return parser


def _effective_threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("ONEBIT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"ONEBIT_THREADS must be an integer, got {env!r}") from exc
    return 1


def _effective_config(args) -> SimConfig:
    cfg = load_config(args.config) if args.config else SimConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_path"] = args.out
    if getattr(args, "timing", False):
        overrides["include_timing"] = True
    if getattr(args, "genie_crc", False):
        if cfg.adaptive is None:
            raise ConfigError("--genie-crc needs an 'adaptive' frame plan in the config")
        overrides["adaptive"] = dataclasses.replace(cfg.adaptive, genie_crc=True)
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    if cfg.output_path is None:
        raise ConfigError("no output path: set output_path in the config or pass --out")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        threads = _effective_threads(args)
        cfg = _effective_config(args)
        if args.command == "ser-sweep":
            run_ser_sweep(cfg, threads=threads).to_csv(cfg.output_path)
        elif args.command == "zero-count":
            run_zero_count_sweep(cfg, threads=threads).to_csv(cfg.output_path)
        elif args.command == "snr-train":
            run_offline_snr_training(cfg, cfg.output_path)
        elif args.command == "adaptive":
            adaptive_trace_csv(run_adaptive(cfg, threads=threads), cfg.output_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
