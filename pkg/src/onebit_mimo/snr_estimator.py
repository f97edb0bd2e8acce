"""SNR estimation from the count of zero-probability likelihood functions.

Offline, over a grid of known SNRs, the pilot phase is simulated with
dithering and the average number of zero-probability likelihood functions
per candidate (out of 2*Nr) is recorded.  A degree-5 polynomial fitted to
(count -> SNR dB) then lets the receiver estimate the noise variance
online from the one number it can observe without CSI.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import ConfigError, FitError
from .likelihood import LikelihoodTable, learn_likelihood_table
from .pilots import simulate_pilots
from .signal_model import LinkParams, build_constellation, draw_channel, enumerate_candidates


def count_zero_prob(t: LikelihoodTable) -> int:
    """Number of exactly-zero likelihood values in a learned table.

    Counts over both signs: an entry with p(+1) = 0 or p(+1) = 1
    contributes one zero (the pair cannot zero together).  Dividing by K
    gives the per-candidate count in [0, dim] that the offline dataset
    records.
    """
    if not np.any(t.counts_total > 0):
        raise ValueError("zero-probability counting is defined for learned tables only")
    return int(np.count_nonzero(t.p_one == 0.0) + np.count_nonzero(t.p_one == 1.0))


@dataclass(frozen=True)
class OfflineDataset:
    """Rows of (SNR dB, mean per-candidate zero count), plus the generating config."""

    gamma_db: np.ndarray        # (L,) strictly increasing
    n_zero_avg: np.ndarray      # (L,) in [0, 2*Nr]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.gamma_db) != len(self.n_zero_avg):
            raise ConfigError("gamma_db and n_zero_avg lengths differ")
        if np.any(np.diff(self.gamma_db) <= 0):
            raise ConfigError("gamma_db must be strictly increasing")


@dataclass(frozen=True)
class PolyModel:
    """Polynomial map from a zero count to an SNR estimate in dB.

    coeffs are ascending (c0 + c1*n + ... + c5*n^5); evaluation clamps the
    argument to the fitted domain to avoid wild extrapolation.
    """

    degree: int
    coeffs: np.ndarray          # (degree + 1,)
    domain: tuple[float, float]
    residual_norm: float = 0.0

    def eval(self, n_zero: float) -> float:
        x = min(max(float(n_zero), self.domain[0]), self.domain[1])
        acc = 0.0
        for c in self.coeffs[::-1]:     # Horner
            acc = acc * x + c
        return acc


@dataclass(frozen=True)
class OfflineConfig:
    """Settings for the offline training sweep."""

    nr: int = 32
    nu: int = 4
    mod_order: int = 4
    n_tr: int = 50
    sigma2_ratio: float = 1.0
    gamma_db_grid: tuple[float, ...] = tuple(float(g) for g in range(-10, 31, 2))
    trials: int = 10

    def __post_init__(self):
        if len(self.gamma_db_grid) == 0:
            raise ConfigError("gamma_db_grid must be nonempty")
        if self.trials < 1 or self.n_tr < 1:
            raise ConfigError("trials and n_tr must be positive")


def _offline_zero_count(cfg: OfflineConfig, cs, gamma_db: float, snr_idx: int,
                        trial: int, seed: int) -> float:
    """Per-candidate mean zero count for one channel draw at one SNR."""
    lp = LinkParams.from_snr_db(gamma_db, sigma2_ratio=cfg.sigma2_ratio)
    ch = draw_channel(cfg.nr, cfg.nu, rngmod.substream(seed, rngmod.OFFLINE, trial, rngmod.CHANNEL))
    _, dithered = simulate_pilots(
        ch, cs, lp, cfg.n_tr,
        noise_rng=rngmod.substream(seed, rngmod.OFFLINE, trial, snr_idx, rngmod.PILOT_NOISE),
        dither_rng=rngmod.substream(seed, rngmod.OFFLINE, trial, snr_idx, rngmod.PILOT_DITHER),
    )
    table = learn_likelihood_table(dithered)
    return count_zero_prob(table) / cs.k_count


def generate_offline_dataset(cfg: OfflineConfig, seed: int) -> OfflineDataset:
    """Mean per-candidate zero counts of dithered learned tables over an SNR grid."""
    constellation = build_constellation(cfg.mod_order)
    cs = enumerate_candidates(constellation, cfg.nu)
    counts = np.empty(len(cfg.gamma_db_grid))
    for snr_idx, gamma_db in enumerate(cfg.gamma_db_grid):
        per_trial = [
            _offline_zero_count(cfg, cs, gamma_db, snr_idx, trial, seed)
            for trial in range(cfg.trials)
        ]
        counts[snr_idx] = float(np.mean(per_trial))
    return OfflineDataset(
        gamma_db=np.asarray(cfg.gamma_db_grid, dtype=np.float64),
        n_zero_avg=counts,
        meta={
            "nr": cfg.nr, "nu": cfg.nu, "order": cfg.mod_order, "n_tr": cfg.n_tr,
            "sigma2_ratio": cfg.sigma2_ratio, "trials": cfg.trials,
        },
    )


def fit_polynomial(ds: OfflineDataset, degree: int = 5) -> PolyModel:
    """Least-squares polynomial of gamma_db in n_zero_avg, with column scaling."""
    x = np.asarray(ds.n_zero_avg, dtype=np.float64)
    y = np.asarray(ds.gamma_db, dtype=np.float64)
    if len(x) < degree + 1:
        raise FitError(f"need at least {degree + 1} rows for degree {degree}, got {len(x)}")
    if len(np.unique(x)) < degree + 1:
        raise FitError("abscissae are not distinct enough for the requested degree")
    v = np.vander(x, degree + 1, increasing=True)
    scale = np.linalg.norm(v, axis=0)
    scale[scale == 0.0] = 1.0
    coeffs_scaled, _, rank, _ = np.linalg.lstsq(v / scale, y, rcond=None)
    if rank < degree + 1:
        raise FitError(f"rank-deficient design matrix (rank {rank} < {degree + 1})")
    coeffs = coeffs_scaled / scale
    residual = float(np.linalg.norm(v @ coeffs - y))
    return PolyModel(
        degree=degree,
        coeffs=coeffs,
        domain=(float(x.min()), float(x.max())),
        residual_norm=residual,
    )


def estimate_noise_variance(m: PolyModel, n_zero_obs: float, rho: float) -> float:
    """Noise variance from an observed zero count: n0 = rho * 10^(-gamma_hat/10)."""
    if rho <= 0:
        raise ConfigError(f"rho must be positive, got {rho}")
    gamma_db = m.eval(n_zero_obs)
    return rho * 10.0 ** (-gamma_db / 10.0)


def save_dataset_csv(ds: OfflineDataset, path) -> None:
    with open(path, "w") as fh:
        fh.write("gamma_db,n_zero_avg\n")
        for g, n in zip(ds.gamma_db, ds.n_zero_avg):
            fh.write(f"{float(g)!r},{float(n)!r}\n")


def load_dataset_csv(path) -> OfflineDataset:
    data = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
    return OfflineDataset(gamma_db=data[:, 0], n_zero_avg=data[:, 1])


def save_model_json(m: PolyModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(
            {
                "degree": m.degree,
                "coeffs": [float(c) for c in m.coeffs],
                "domain": [m.domain[0], m.domain[1]],
                "residual_norm": m.residual_norm,
            },
            fh,
            indent=2,
        )
        fh.write("\n")


def load_model_json(path) -> PolyModel:
    with open(path) as fh:
        d = json.load(fh)
    return PolyModel(
        degree=int(d["degree"]),
        coeffs=np.asarray(d["coeffs"], dtype=np.float64),
        domain=(float(d["domain"][0]), float(d["domain"][1])),
        residual_norm=float(d.get("residual_norm", 0.0)),
    )
