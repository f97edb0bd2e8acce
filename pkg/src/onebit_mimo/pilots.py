"""Pilot transmission phase: quantized sign tensors for likelihood learning.

The schedule is candidate-major: all n_tr repetitions of candidate 1, then
candidate 2, and so on.  Noise is drawn in fixed-size candidate blocks so
peak memory stays bounded for large n_tr; the block size is a constant so
the consumed random stream never depends on runtime conditions.
"""

from __future__ import annotations

import numpy as np

from .likelihood import PilotObservations
from .signal_model import CandidateSet, ChannelRealization, LinkParams, quantize

_BLOCK = 32     # candidates per noise draw


def pilot_means(ch: ChannelRealization, cs: CandidateSet, lp: LinkParams) -> np.ndarray:
    """Noiseless received levels sqrt(rho) * f_i . s_k, shape (K, 2*Nr)."""
    return np.sqrt(lp.rho) * (cs.vectors_real @ ch.h_real.T)


def simulate_pilots(
    ch: ChannelRealization,
    cs: CandidateSet,
    lp: LinkParams,
    n_tr: int,
    noise_rng: np.random.Generator,
    dither_rng: np.random.Generator | None = None,
) -> tuple[PilotObservations, PilotObservations | None]:
    """Quantized pilot outputs without and (optionally) with dithering.

    Both variants share the same thermal noise draws, so learned-table
    comparisons are paired.  Dither draws come from their own stream and
    happen only when requested.
    """
    means = pilot_means(ch, cs, lp)
    k_count, dim = means.shape
    noise_std = np.sqrt(lp.n0 / 2.0)
    dither_std = np.sqrt(lp.sigma2 / 2.0)

    y_plain = np.empty((k_count, n_tr, dim), dtype=np.int8)
    y_dith = np.empty((k_count, n_tr, dim), dtype=np.int8) if dither_rng is not None else None
    for lo in range(0, k_count, _BLOCK):
        hi = min(lo + _BLOCK, k_count)
        r = means[lo:hi, None, :] + noise_rng.normal(0.0, noise_std, size=(hi - lo, n_tr, dim))
        y_plain[lo:hi] = quantize(r)
        if y_dith is not None:
            r += dither_rng.normal(0.0, dither_std, size=(hi - lo, n_tr, dim))
            y_dith[lo:hi] = quantize(r)

    plain = PilotObservations(y=y_plain)
    dithered = PilotObservations(y=y_dith) if y_dith is not None else None
    return plain, dithered
