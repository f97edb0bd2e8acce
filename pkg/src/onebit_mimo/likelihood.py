"""Likelihood tables for one-bit ML detection.

A table holds, for every candidate transmit vector k and every quantizer
output i, the probability p_one[k, i] that output i equals +1 given k.
The complementary probability is implied: p(-1) = 1 - p(+1).  Tables come
from four sources:

* ``csi_likelihood_table``  -- analytic, from the channel matrix,
* ``learn_likelihood_table`` -- empirical sign frequencies over pilots,
* ``apply_bias``            -- empirical with exact zeros floored,
* ``dither_invert``         -- empirical-from-dithered-pilots mapped back
                               to the undithered noise level.

Detection consumes the cached natural logs; ln 0 = -inf is a legal value
(that is precisely the failure mode the robust learning variants repair).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ConfigError
from .signal_model import CandidateSet, ChannelRealization, LinkParams


def std_normal_cdf(x):
    """Standard normal CDF, accurate to better than 1e-14 absolute."""
    return ndtr(x)


def std_normal_quantile(p):
    """Standard normal quantile; p must lie strictly inside (0, 1)."""
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any(p_arr <= 0.0) or np.any(p_arr >= 1.0):
        raise ValueError("quantile requires p strictly inside (0, 1); clamp first")
    return ndtri(p)


@dataclass(frozen=True)
class LikelihoodTable:
    """K x dim matrix of p(+1) probabilities with provenance counts.

    counts_one / counts_total record how each entry was observed; analytic
    and inverted tables carry zeros there.  n_tr is the base pilot
    repetition count (0 when the table was not learned), kept so bias
    repair can validate its floor and post updates can resume counting.
    """

    p_one: np.ndarray           # (K, dim) float64 in [0, 1]
    counts_one: np.ndarray      # (K, dim) int64
    counts_total: np.ndarray    # (K, dim) int64
    log_p_one: np.ndarray       # (K, dim) float64, -inf allowed
    log_p_minus_one: np.ndarray
    n_tr: int = 0

    @property
    def k_count(self) -> int:
        return self.p_one.shape[0]

    @property
    def dim(self) -> int:
        return self.p_one.shape[1]


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def make_table(p_one: np.ndarray, counts_one: np.ndarray | None = None,
               counts_total: np.ndarray | None = None, n_tr: int = 0) -> LikelihoodTable:
    """Assemble an immutable table, computing the log caches."""
    p_one = np.asarray(p_one, dtype=np.float64)
    if np.any(p_one < 0.0) or np.any(p_one > 1.0):
        raise ConfigError("probabilities must lie in [0, 1]")
    if counts_one is None:
        counts_one = np.zeros(p_one.shape, dtype=np.int64)
    if counts_total is None:
        counts_total = np.zeros(p_one.shape, dtype=np.int64)
    with np.errstate(divide="ignore"):
        log_p_one = np.log(p_one)
        log_p_minus_one = np.log1p(-p_one)
    return LikelihoodTable(
        p_one=_freeze(p_one),
        counts_one=_freeze(np.asarray(counts_one, dtype=np.int64)),
        counts_total=_freeze(np.asarray(counts_total, dtype=np.int64)),
        log_p_one=_freeze(log_p_one),
        log_p_minus_one=_freeze(log_p_minus_one),
        n_tr=int(n_tr),
    )


def csi_likelihood_table(ch: ChannelRealization, cs: CandidateSet, lp: LinkParams) -> LikelihoodTable:
    """Analytic table from the channel: p(+1) = Phi(sqrt(2 rho / n0) * f_i . s_k)."""
    if cs.vectors_real.shape[1] != ch.h_real.shape[1]:
        raise ConfigError("candidate set and channel disagree on the user count")
    dots = cs.vectors_real @ ch.h_real.T                    # (K, 2*Nr), entry [k, i] = f_i . s_k
    p_one = ndtr(np.sqrt(2.0 * lp.rho / lp.n0) * dots)
    return make_table(p_one)


@dataclass(frozen=True)
class PilotObservations:
    """Quantized pilot outputs, candidate-major: y[k, t, i] in {+1, -1}."""

    y: np.ndarray               # (K, n_tr, dim) int8

    def __post_init__(self):
        if self.y.ndim != 3:
            raise ConfigError(f"expected a (K, n_tr, dim) tensor, got shape {self.y.shape}")
        if not np.all(np.abs(self.y) == 1):
            raise ConfigError("pilot observations must be +1/-1 signs")

    @property
    def n_tr(self) -> int:
        return self.y.shape[1]


def learn_likelihood_table(obs: PilotObservations) -> LikelihoodTable:
    """Empirical sign frequencies: p(+1)[k, i] = (# of +1 over n_tr repetitions) / n_tr."""
    n_tr = obs.n_tr
    if n_tr < 1:
        raise ConfigError("need at least one pilot repetition")
    counts_one = np.sum(obs.y > 0, axis=1, dtype=np.int64)
    counts_total = np.full(counts_one.shape, n_tr, dtype=np.int64)
    p_one = counts_one / counts_total
    return make_table(p_one, counts_one, counts_total, n_tr=n_tr)


def apply_bias(t: LikelihoodTable, p_bias: float) -> LikelihoodTable:
    """Floor exact-zero likelihood values at p_bias, their complements at 1 - p_bias.

    The floor must satisfy 0 < p_bias < 1/n_tr: a zero entry means no sign
    change was seen in n_tr looks, so its true probability is plausibly
    below 1/n_tr.  Entries that are not exactly 0 or 1 are untouched, and
    observation counts are carried over unchanged.
    """
    limit = 1.0 / t.n_tr if t.n_tr > 0 else 1.0
    if not 0.0 < p_bias < limit:
        raise ConfigError(f"p_bias must lie in (0, {limit}), got {p_bias}")
    p = t.p_one.copy()
    p[t.p_one == 0.0] = p_bias
    p[t.p_one == 1.0] = 1.0 - p_bias
    return make_table(p, t.counts_one.copy(), t.counts_total.copy(), n_tr=t.n_tr)


def dither_invert(t_dithered: LikelihoodTable, lp: LinkParams, p_clamp: float) -> LikelihoodTable:
    """Map probabilities learned under dithering back to the undithered noise level.

    Each dithered probability p~ determines the underlying signal level
    psi = -sqrt((n0 + sigma2)/2) * Phi^-1(1 - p~); re-evaluating the
    quantizer model at the true noise variance gives
    p(+1) = 1 - Phi(-sqrt(2/n0) * psi).  Zero-probability values get the
    bias-repair fallback on both sides of the map: inputs are clamped to
    [p_clamp, 1 - p_clamp] (which also keeps Phi^-1 in-domain), and
    outputs that round to exact 0/1 -- the re-evaluation amplifies psi by
    sqrt((n0 + sigma2)/n0), far past double precision at high SNR -- are
    floored the same way so they cannot veto whole candidates.
    """
    if lp.sigma2 <= 0:
        raise ConfigError("dither inversion needs a positive dither variance")
    if not 0.0 < p_clamp < 0.5:
        raise ConfigError(f"p_clamp must lie in (0, 0.5), got {p_clamp}")
    p_tilde = np.clip(t_dithered.p_one, p_clamp, 1.0 - p_clamp)
    psi = -np.sqrt((lp.n0 + lp.sigma2) / 2.0) * ndtri(1.0 - p_tilde)
    p_one = 1.0 - ndtr(-np.sqrt(2.0 / lp.n0) * psi)
    p_one[p_one == 0.0] = p_clamp
    p_one[p_one == 1.0] = 1.0 - p_clamp
    return make_table(p_one, n_tr=t_dithered.n_tr)


def log_likelihood(t: LikelihoodTable, y: np.ndarray, k: int) -> float:
    """Log-likelihood of the sign vector y under candidate k (sum of entry logs)."""
    y = np.asarray(y)
    if y.shape[-1] != t.dim:
        raise ConfigError(f"observation length {y.shape[-1]} != table dim {t.dim}")
    return float(np.sum(np.where(y > 0, t.log_p_one[k], t.log_p_minus_one[k])))


def log_likelihood_all(t: LikelihoodTable, y: np.ndarray) -> np.ndarray:
    """Log-likelihood of y under every candidate at once; shape (K,)."""
    y = np.asarray(y)
    if y.shape[-1] != t.dim:
        raise ConfigError(f"observation length {y.shape[-1]} != table dim {t.dim}")
    return np.sum(np.where(y > 0, t.log_p_one, t.log_p_minus_one), axis=1)


def dump_table_csv(t: LikelihoodTable, path) -> None:
    """Flat debugging dump: one row per (k, i) entry."""
    with open(path, "w") as fh:
        fh.write("k,i,p_one,counts_one,counts_total\n")
        for k in range(t.k_count):
            for i in range(t.dim):
                fh.write(f"{k},{i},{float(t.p_one[k, i])!r},"
                         f"{int(t.counts_one[k, i])},{int(t.counts_total[k, i])}\n")


def load_table_csv(path) -> LikelihoodTable:
    """Inverse of dump_table_csv (counts only survive for learned tables)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    data = np.atleast_2d(data)
    k_count = int(data[:, 0].max()) + 1
    dim = int(data[:, 1].max()) + 1
    p = data[:, 2].reshape(k_count, dim)
    c1 = data[:, 3].reshape(k_count, dim).astype(np.int64)
    ct = data[:, 4].reshape(k_count, dim).astype(np.int64)
    n_tr = int(ct.max(initial=0))
    return make_table(p, c1, ct, n_tr=n_tr if np.all(ct == n_tr) else 0)
