"""Hard-decision symbol-vector detectors.

``ml_detect`` maximizes the product of per-output likelihoods (evaluated in
the log domain) over the enumerated candidate set.  ``zf_detect`` is the
CSI-based baseline: pseudo-inverse applied to the sign vector, followed by
per-user nearest-neighbor slicing after energy renormalization.

All functions are pure; batch variants exist for the Monte Carlo loops and
use BLAS matmuls with the -inf entries masked back in afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .likelihood import LikelihoodTable, log_likelihood_all
from .signal_model import CandidateSet, ChannelRealization, Constellation

# Stand-in for -inf inside matmuls (0 * -inf would poison them with NaNs).
_NEG_SENTINEL = -1.0e30


@dataclass(frozen=True)
class DetectionResult:
    k_star: int
    log_score: float
    per_user_symbols: np.ndarray    # (Nu,) int64
    tie: bool
    failed: bool = False            # zf only: channel was rank-deficient


def ml_detect(t: LikelihoodTable, y: np.ndarray, cs: CandidateSet) -> DetectionResult:
    """Argmax of the log-likelihood over all candidates; ties break to the lowest index.

    With a fully wiped table every score is -inf; the result is then
    candidate 0 with the tie flag set, so error accounting never stalls.
    """
    if t.k_count != cs.k_count:
        raise ConfigError("table and candidate set disagree on K")
    scores = log_likelihood_all(t, y)
    k_star = int(np.argmax(scores))
    best = scores[k_star]
    tie = bool(np.count_nonzero(scores == best) > 1)
    return DetectionResult(
        k_star=k_star,
        log_score=float(best),
        per_user_symbols=cs.index_map[k_star].copy(),
        tie=tie,
    )


def ml_detect_batch(t: LikelihoodTable, y_batch: np.ndarray, cs: CandidateSet) -> np.ndarray:
    """Candidate indices for a batch of observations, shape (N,).

    Scores are computed as two matmuls over {0,1} indicator matrices with
    -inf replaced by a large negative sentinel, then candidates that match
    any zero-probability entry are forced back to -inf.  Ties resolve to
    the lowest candidate index, matching ml_detect; finite scores may
    differ from the scalar path by floating-point summation order only.
    """
    if t.k_count != cs.k_count:
        raise ConfigError("table and candidate set disagree on K")
    y_batch = np.asarray(y_batch)
    if y_batch.ndim != 2 or y_batch.shape[1] != t.dim:
        raise ConfigError(f"expected an (N, {t.dim}) batch, got shape {y_batch.shape}")

    pos = (y_batch.T > 0).astype(np.float64)            # (dim, N)
    neg = 1.0 - pos
    l1 = np.where(np.isneginf(t.log_p_one), _NEG_SENTINEL, t.log_p_one)
    lm1 = np.where(np.isneginf(t.log_p_minus_one), _NEG_SENTINEL, t.log_p_minus_one)
    scores = l1 @ pos + lm1 @ neg                       # (K, N)

    z1 = (t.p_one == 0.0).astype(np.float64)
    zm1 = (t.p_one == 1.0).astype(np.float64)
    zero_hits = z1 @ pos + zm1 @ neg
    scores[zero_hits > 0.0] = -np.inf
    return np.argmax(scores, axis=0)


def _slice_nearest(z_complex: np.ndarray, c: Constellation) -> np.ndarray:
    """Per-entry nearest constellation point indices."""
    d2 = np.abs(z_complex[..., None] - c.points) ** 2
    return np.argmin(d2, axis=-1)


def zf_detect(ch: ChannelRealization, y: np.ndarray, c: Constellation) -> DetectionResult:
    """One-bit zero-forcing baseline: z = pinv(H) y, renormalize, slice per user.

    Slicing renormalizes z to unit average symbol energy, so any positive
    scaling of y leaves the decision unchanged (for 4-QAM only the
    quadrant matters anyway).  A rank-deficient channel yields a failed
    result, which callers count as all users wrong.
    """
    nu = ch.nu
    pinv, ok = _channel_pinv(ch)
    if not ok:
        return DetectionResult(
            k_star=0,
            log_score=-np.inf,
            per_user_symbols=np.zeros(nu, dtype=np.int64),
            tie=True,
            failed=True,
        )
    idx = zf_detect_batch(np.asarray(y, dtype=np.float64)[None, :], pinv, nu, c)[0]
    k_star = _indices_to_candidate(idx, c.order)
    return DetectionResult(
        k_star=k_star,
        log_score=float("nan"),     # zf is not likelihood-based
        per_user_symbols=idx,
        tie=False,
    )


def _channel_pinv(ch: ChannelRealization) -> tuple[np.ndarray, bool]:
    """Pseudo-inverse of the real-composite channel plus a full-rank flag."""
    u, s, vt = np.linalg.svd(ch.h_real, full_matrices=False)
    tol = max(ch.h_real.shape) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    if np.any(s <= tol):
        return np.zeros((ch.h_real.shape[1], ch.h_real.shape[0])), False
    return (vt.T / s) @ u.T, True


def zf_detect_batch(y_batch: np.ndarray, pinv: np.ndarray, nu: int, c: Constellation) -> np.ndarray:
    """Per-user symbol indices for a batch of sign vectors, shape (N, Nu)."""
    z = np.asarray(y_batch, dtype=np.float64) @ pinv.T      # (N, 2*Nu)
    z_complex = z[:, :nu] + 1j * z[:, nu:]
    energy = np.mean(np.abs(z_complex) ** 2, axis=1, keepdims=True)
    z_norm = np.divide(z_complex, np.sqrt(energy), out=z_complex.copy(), where=energy > 0)
    return _slice_nearest(z_norm, c)


def _indices_to_candidate(idx: np.ndarray, order: int) -> int:
    """Per-user symbol indices -> candidate index (user 0 fastest-varying)."""
    return int(np.sum(np.asarray(idx, dtype=np.int64) * order ** np.arange(len(idx))))


def indices_to_candidates(idx: np.ndarray, order: int) -> np.ndarray:
    """Vectorized per-user indices (N, Nu) -> candidate indices (N,)."""
    idx = np.asarray(idx, dtype=np.int64)
    return idx @ (order ** np.arange(idx.shape[1], dtype=np.int64))
