"""Experiment orchestration: seeded Monte Carlo sweeps and CSV emission.

Trials (channel draws) are the unit of parallelism.  Every random quantity
comes from a substream keyed by (seed, trial, snr index, purpose), and all
error accounting reduces integer counts in trial order, so a run's output
is byte-identical for any worker count.  Within a trial all detectors see
the same channel, pilot noise, and data noise (common random numbers).
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .adaptation import FramePlan, SessionTrace, run_adaptive_session
from .detectors import ml_detect_batch, zf_detect_batch, _channel_pinv
from .errors import ConfigError
from .likelihood import apply_bias, csi_likelihood_table, dither_invert, learn_likelihood_table
from .pilots import simulate_pilots
from .signal_model import (
    LinkParams,
    build_constellation,
    draw_channel,
    enumerate_candidates,
    quantize,
    transmit,
)
from .snr_estimator import (
    OfflineConfig,
    PolyModel,
    count_zero_prob,
    estimate_noise_variance,
    fit_polynomial,
    generate_offline_dataset,
    load_model_json,
    save_dataset_csv,
    save_model_json,
)

DETECTORS = ("csi-ml", "naive-ml", "biased-ml", "dither-ml", "dither-ml-est-snr", "zf")
LEARNED = ("naive-ml", "biased-ml", "dither-ml", "dither-ml-est-snr")
DITHERED = ("dither-ml", "dither-ml-est-snr")

CSV_HEADER = "detector,snr_db,n_tr,symbols_tested,symbol_errors,ser,vector_errors,vser,mean_zero_count,wall_time_ms"
TRACE_HEADER = "subframe_index,crc_pass,cumulative_v,subframe_ser"


@dataclass(frozen=True)
class SimConfig:
    """One experiment description; (config, seed) determines every output byte."""

    nr: int = 32
    nu: int = 4
    mod_order: int = 4
    snr_db_grid: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    n_tr: int = 50
    n_trials: int = 50
    n_data_per_trial: int = 2000
    detectors: tuple[str, ...] = ("csi-ml", "naive-ml", "biased-ml", "dither-ml", "zf")
    sigma2_ratio: float = 0.5       # sigma^2 = ratio * rho
    p_bias_scale: float = 1e-2      # p_bias = scale / n_tr
    seed: int = 0
    adaptive: FramePlan | None = None
    output_path: str | None = None
    snr_model_path: str | None = None
    include_timing: bool = False

    def __post_init__(self):
        if not self.nr >= self.nu >= 1:
            raise ConfigError(f"need nr >= nu >= 1, got nr={self.nr}, nu={self.nu}")
        for name in ("n_tr", "n_trials", "n_data_per_trial"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if len(self.snr_db_grid) == 0:
            raise ConfigError("snr_db_grid must be nonempty")
        if len(self.detectors) == 0:
            raise ConfigError("detector list must be nonempty")
        for d in self.detectors:
            if d not in DETECTORS:
                raise ConfigError(f"unknown detector {d!r}; expected one of {DETECTORS}")
        if self.sigma2_ratio < 0:
            raise ConfigError("sigma2_rule ratio must be nonnegative")
        if not 0.0 < self.p_bias_scale < 1.0:
            raise ConfigError("p_bias_rule scale must lie in (0, 1)")

    @property
    def p_bias(self) -> float:
        return self.p_bias_scale / self.n_tr

    @property
    def symbols_per_point(self) -> int:
        return self.n_trials * self.n_data_per_trial * self.nu


_CONFIG_KEYS = {
    "nr", "nu", "mod_order", "snr_db_grid", "n_tr", "n_trials", "n_data_per_trial",
    "detectors", "sigma2_rule", "p_bias_rule", "seed", "adaptive", "output_path",
    "snr_model_path", "include_timing",
}
_ADAPTIVE_KEYS = {"d", "n_d_sub", "crc_bits", "genie_crc", "update_enabled"}


def config_from_dict(doc: dict) -> SimConfig:
    """SimConfig from a parsed JSON document; unknown keys are errors."""
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key in ("nr", "nu", "mod_order", "n_tr", "n_trials", "n_data_per_trial", "seed"):
        if key in doc:
            kwargs[key] = int(doc[key])
    if "snr_db_grid" in doc:
        kwargs["snr_db_grid"] = tuple(float(g) for g in doc["snr_db_grid"])
    if "detectors" in doc:
        kwargs["detectors"] = tuple(doc["detectors"])
    if "sigma2_rule" in doc:
        rule = doc["sigma2_rule"]
        if set(rule) != {"ratio"}:
            raise ConfigError(f"sigma2_rule must be {{'ratio': r}}, got {rule}")
        kwargs["sigma2_ratio"] = float(rule["ratio"])
    if "p_bias_rule" in doc:
        rule = doc["p_bias_rule"]
        if set(rule) != {"scale"}:
            raise ConfigError(f"p_bias_rule must be {{'scale': c}}, got {rule}")
        kwargs["p_bias_scale"] = float(rule["scale"])
    if doc.get("adaptive") is not None:
        plan = doc["adaptive"]
        unknown = set(plan) - _ADAPTIVE_KEYS
        if unknown:
            raise ConfigError(f"unknown adaptive keys: {sorted(unknown)}")
        kwargs["adaptive"] = FramePlan(
            d=int(plan["d"]),
            n_d_sub=int(plan["n_d_sub"]),
            crc_bits=int(plan.get("crc_bits", 16)),
            genie_crc=bool(plan.get("genie_crc", False)),
            update_enabled=bool(plan.get("update_enabled", True)),
        )
    for key in ("output_path", "snr_model_path"):
        if key in doc and doc[key] is not None:
            kwargs[key] = str(doc[key])
    if "include_timing" in doc:
        kwargs["include_timing"] = bool(doc["include_timing"])
    return SimConfig(**kwargs)


def load_config(path) -> SimConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return config_from_dict(doc)


@dataclass(frozen=True)
class SweepRow:
    detector: str
    snr_db: float
    n_tr: int
    symbols_tested: int
    symbol_errors: int
    ser: float | None
    vector_errors: int
    vser: float | None
    mean_zero_count: float | None
    wall_time_s: float


@dataclass(frozen=True)
class ExperimentResult:
    rows: list
    config: SimConfig

    def to_csv(self, path=None) -> str:
        """Render the result table; wall time stays blank unless timing was requested
        so that (config, seed) determines every byte."""
        lines = [CSV_HEADER]
        for r in self.rows:
            wall = str(int(round(r.wall_time_s * 1000.0))) if self.config.include_timing else ""
            lines.append(",".join([
                r.detector,
                repr(float(r.snr_db)),
                str(r.n_tr),
                str(r.symbols_tested),
                str(r.symbol_errors),
                "" if r.ser is None else repr(r.ser),
                str(r.vector_errors),
                "" if r.vser is None else repr(r.vser),
                "" if r.mean_zero_count is None else repr(r.mean_zero_count),
                wall,
            ]))
        if "zf" in self.config.detectors:
            lines.append("# zf-variant=pinv-slice")
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def _resolve_model(cfg: SimConfig) -> PolyModel | None:
    """Load or train the zero-count -> SNR model when the est-SNR detector runs."""
    if "dither-ml-est-snr" not in cfg.detectors:
        return None
    if cfg.snr_model_path is not None:
        return load_model_json(cfg.snr_model_path)
    off = OfflineConfig(
        nr=cfg.nr, nu=cfg.nu, mod_order=cfg.mod_order, n_tr=cfg.n_tr,
        sigma2_ratio=cfg.sigma2_ratio, trials=8,
    )
    return fit_polynomial(generate_offline_dataset(off, cfg.seed))


def _sweep_trial(cfg: SimConfig, model: PolyModel | None, trial: int) -> dict:
    """Error and zero-probability counts for one channel draw, all SNRs and detectors."""
    constellation = build_constellation(cfg.mod_order)
    cs = enumerate_candidates(constellation, cfg.nu)
    ch = draw_channel(cfg.nr, cfg.nu, rngmod.substream(cfg.seed, trial, rngmod.CHANNEL))

    n_snr = len(cfg.snr_db_grid)
    det_names = cfg.detectors
    sym_err = {d: np.zeros(n_snr, dtype=np.int64) for d in det_names}
    vec_err = {d: np.zeros(n_snr, dtype=np.int64) for d in det_names}
    zero_counts = {d: np.zeros(n_snr, dtype=np.int64) for d in det_names}

    wants_learning = any(d in LEARNED for d in det_names)
    wants_dither = any(d in DITHERED for d in det_names)
    if "zf" in det_names:
        pinv, full_rank = _channel_pinv(ch)

    for snr_idx, gamma_db in enumerate(cfg.snr_db_grid):
        lp = LinkParams.from_snr_db(gamma_db, sigma2_ratio=cfg.sigma2_ratio)
        lp_data = LinkParams(rho=lp.rho, n0=lp.n0, sigma2=0.0)

        tables = {}
        if wants_learning:
            plain, dithered = simulate_pilots(
                ch, cs, lp, cfg.n_tr,
                noise_rng=rngmod.substream(cfg.seed, trial, snr_idx, rngmod.PILOT_NOISE),
                dither_rng=(rngmod.substream(cfg.seed, trial, snr_idx, rngmod.PILOT_DITHER)
                            if wants_dither else None),
            )
            naive = learn_likelihood_table(plain)
            naive_zeros = count_zero_prob(naive)
            if "naive-ml" in det_names:
                tables["naive-ml"] = naive
                zero_counts["naive-ml"][snr_idx] = naive_zeros
            if "biased-ml" in det_names:
                tables["biased-ml"] = apply_bias(naive, cfg.p_bias)
                zero_counts["biased-ml"][snr_idx] = naive_zeros
            if wants_dither:
                dither_learned = learn_likelihood_table(dithered)
                dither_zeros = count_zero_prob(dither_learned)
                if "dither-ml" in det_names:
                    tables["dither-ml"] = dither_invert(dither_learned, lp, p_clamp=cfg.p_bias)
                    zero_counts["dither-ml"][snr_idx] = dither_zeros
                if "dither-ml-est-snr" in det_names:
                    n_zero_obs = dither_zeros / cs.k_count
                    n0_hat = estimate_noise_variance(model, n_zero_obs, lp.rho)
                    lp_hat = LinkParams(rho=lp.rho, n0=n0_hat, sigma2=lp.sigma2)
                    tables["dither-ml-est-snr"] = dither_invert(dither_learned, lp_hat, p_clamp=cfg.p_bias)
                    zero_counts["dither-ml-est-snr"][snr_idx] = dither_zeros
        if "csi-ml" in det_names:
            tables["csi-ml"] = csi_likelihood_table(ch, cs, lp)

        ks_true = rngmod.substream(cfg.seed, trial, snr_idx, rngmod.DATA_SYMBOLS).integers(
            0, cs.k_count, size=cfg.n_data_per_trial)
        y = quantize(transmit(
            ch, cs.vectors_real[ks_true], lp_data,
            rngmod.substream(cfg.seed, trial, snr_idx, rngmod.DATA_NOISE)))
        true_idx = cs.index_map[ks_true]

        for det in det_names:
            if det == "zf":
                if not full_rank:
                    sym_err[det][snr_idx] += cfg.n_data_per_trial * cfg.nu
                    vec_err[det][snr_idx] += cfg.n_data_per_trial
                    continue
                hat_idx = zf_detect_batch(y, pinv, cfg.nu, constellation)
            else:
                k_hat = ml_detect_batch(tables[det], y, cs)
                hat_idx = cs.index_map[k_hat]
            wrong = hat_idx != true_idx
            sym_err[det][snr_idx] += int(np.count_nonzero(wrong))
            vec_err[det][snr_idx] += int(np.count_nonzero(np.any(wrong, axis=1)))

    return {"sym_err": sym_err, "vec_err": vec_err, "zero_counts": zero_counts}


def _map_trials(worker, cfg: SimConfig, threads: int):
    """Apply a per-trial worker over all trials, in trial order."""
    trials = range(cfg.n_trials)
    if threads <= 1:
        return [worker(t) for t in trials]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, trials))


class _SweepWorker:
    """Picklable per-trial callable for process pools."""

    def __init__(self, cfg: SimConfig, model: PolyModel | None):
        self.cfg = cfg
        self.model = model

    def __call__(self, trial: int) -> dict:
        return _sweep_trial(self.cfg, self.model, trial)


def run_ser_sweep(cfg: SimConfig, threads: int = 1) -> ExperimentResult:
    """Symbol-error-rate sweep over the SNR grid for every configured detector."""
    t0 = time.perf_counter()
    model = _resolve_model(cfg)
    parts = _map_trials(_SweepWorker(cfg, model), cfg, threads)
    k_count = cfg.mod_order**cfg.nu
    elapsed = time.perf_counter() - t0

    rows = []
    for det in cfg.detectors:
        for snr_idx, gamma_db in enumerate(cfg.snr_db_grid):
            sym = int(sum(p["sym_err"][det][snr_idx] for p in parts))
            vec = int(sum(p["vec_err"][det][snr_idx] for p in parts))
            zeros = int(sum(p["zero_counts"][det][snr_idx] for p in parts))
            tested = cfg.symbols_per_point
            vectors = cfg.n_trials * cfg.n_data_per_trial
            rows.append(SweepRow(
                detector=det,
                snr_db=gamma_db,
                n_tr=cfg.n_tr,
                symbols_tested=tested,
                symbol_errors=sym,
                ser=sym / tested,
                vector_errors=vec,
                vser=vec / vectors,
                mean_zero_count=(zeros / (k_count * cfg.n_trials)) if det in LEARNED else None,
                wall_time_s=elapsed,
            ))
    return ExperimentResult(rows=rows, config=cfg)


def _zero_count_trial(cfg: SimConfig, trial: int) -> dict:
    """Total zero-probability entries of both learned-table variants, one channel."""
    constellation = build_constellation(cfg.mod_order)
    cs = enumerate_candidates(constellation, cfg.nu)
    ch = draw_channel(cfg.nr, cfg.nu, rngmod.substream(cfg.seed, trial, rngmod.CHANNEL))
    plain_zeros = np.zeros(len(cfg.snr_db_grid), dtype=np.int64)
    dith_zeros = np.zeros(len(cfg.snr_db_grid), dtype=np.int64)
    for snr_idx, gamma_db in enumerate(cfg.snr_db_grid):
        lp = LinkParams.from_snr_db(gamma_db, sigma2_ratio=cfg.sigma2_ratio)
        plain, dithered = simulate_pilots(
            ch, cs, lp, cfg.n_tr,
            noise_rng=rngmod.substream(cfg.seed, trial, snr_idx, rngmod.PILOT_NOISE),
            dither_rng=rngmod.substream(cfg.seed, trial, snr_idx, rngmod.PILOT_DITHER),
        )
        plain_zeros[snr_idx] = count_zero_prob(learn_likelihood_table(plain))
        dith_zeros[snr_idx] = count_zero_prob(learn_likelihood_table(dithered))
    return {"plain": plain_zeros, "dithered": dith_zeros}


class _ZeroCountWorker:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg

    def __call__(self, trial: int) -> dict:
        return _zero_count_trial(self.cfg, trial)


def run_zero_count_sweep(cfg: SimConfig, threads: int = 1) -> ExperimentResult:
    """Mean per-candidate zero-probability counts, non-dithered vs dithered learning."""
    t0 = time.perf_counter()
    parts = _map_trials(_ZeroCountWorker(cfg), cfg, threads)
    k_count = cfg.mod_order**cfg.nu
    elapsed = time.perf_counter() - t0
    rows = []
    for det, key in (("naive-ml", "plain"), ("dither-ml", "dithered")):
        for snr_idx, gamma_db in enumerate(cfg.snr_db_grid):
            zeros = int(sum(p[key][snr_idx] for p in parts))
            rows.append(SweepRow(
                detector=det,
                snr_db=gamma_db,
                n_tr=cfg.n_tr,
                symbols_tested=0,
                symbol_errors=0,
                ser=None,
                vector_errors=0,
                vser=None,
                mean_zero_count=zeros / (k_count * cfg.n_trials),
                wall_time_s=elapsed,
            ))
    return ExperimentResult(rows=rows, config=cfg)


def run_offline_snr_training(cfg: SimConfig, model_path, dataset_path=None) -> PolyModel:
    """Generate the offline dataset, fit the polynomial, persist both."""
    off = OfflineConfig(
        nr=cfg.nr, nu=cfg.nu, mod_order=cfg.mod_order, n_tr=cfg.n_tr,
        sigma2_ratio=cfg.sigma2_ratio,
        gamma_db_grid=tuple(cfg.snr_db_grid),
        trials=cfg.n_trials,
    )
    ds = generate_offline_dataset(off, cfg.seed)
    model = fit_polynomial(ds)
    save_model_json(model, model_path)
    if dataset_path is None:
        dataset_path = Path(model_path).with_suffix(".dataset.csv")
    save_dataset_csv(ds, dataset_path)
    return model


class _AdaptiveWorker:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg

    def __call__(self, trial: int) -> SessionTrace:
        cfg = self.cfg
        constellation = build_constellation(cfg.mod_order)
        cs = enumerate_candidates(constellation, cfg.nu)
        lp = LinkParams.from_snr_db(cfg.snr_db_grid[0], sigma2_ratio=cfg.sigma2_ratio)
        return run_adaptive_session(
            cfg.adaptive, cfg.detectors[0], constellation, cs,
            cfg.nr, lp, cfg.n_tr, cfg.p_bias, cfg.seed, trial,
        )


def run_adaptive(cfg: SimConfig, threads: int = 1) -> list[SessionTrace]:
    """CRC-gated adaptive sessions, one per trial."""
    if cfg.adaptive is None:
        raise ConfigError("adaptive runs need an 'adaptive' frame plan in the config")
    if len(cfg.detectors) != 1 or cfg.detectors[0] not in ("biased-ml", "dither-ml"):
        raise ConfigError("adaptive runs take exactly one detector: biased-ml or dither-ml")
    if len(cfg.snr_db_grid) != 1:
        raise ConfigError("adaptive runs take a single SNR point")
    return _map_trials(_AdaptiveWorker(cfg), cfg, threads)


def adaptive_trace_csv(traces: list[SessionTrace], path=None) -> str:
    """Aggregate per-subframe trace: pass counts, mean decoded count, pooled SER."""
    d = len(traces[0].crc_pass)
    symbols = traces[0].symbols_per_subframe * len(traces)
    lines = [TRACE_HEADER]
    for j in range(d):
        passes = sum(int(t.crc_pass[j]) for t in traces)
        v_mean = sum(int(t.cumulative_v[j]) for t in traces) / len(traces)
        errs = sum(int(t.subframe_errors[j]) for t in traces)
        lines.append(f"{j},{passes},{v_mean!r},{(errs / symbols)!r}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
