"""Deterministic random substreams.

Every stochastic quantity in a simulation is drawn from its own substream,
keyed by a master 64-bit seed plus an integer path (trial index, SNR index,
purpose tag).  Substreams are counter-based (Philox), so any subset of work
units can run in any order, on any number of workers, and still consume
exactly the same random numbers.
"""

from __future__ import annotations

import numpy as np

# Purpose tags used as the last path component.
CHANNEL = 0
PILOT_NOISE = 1
PILOT_DITHER = 2
DATA_SYMBOLS = 3
DATA_NOISE = 4
OFFLINE = 5
PAYLOAD_BITS = 6


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the substream identified by (seed, *path).

    The same (seed, path) always yields the same stream, independent of
    which other substreams have been consumed.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
