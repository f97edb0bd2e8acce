"""Signal generation for the one-bit uplink: constellations, candidate
symbol vectors, Rayleigh channels, noise, dither, and the one-bit quantizer.

All arithmetic downstream of the channel is done in the real-composite
domain: a complex vector v becomes [Re v; Im v] and an Nr x Nu complex
channel H becomes the 2Nr x 2Nu block matrix [[Re H, -Im H], [Im H, Re H]].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

SUPPORTED_ORDERS = (4, 16, 64)

# Enumerating every transmit hypothesis is exponential in the user count;
# refuse configurations that would not fit in memory anyway.
MAX_CANDIDATES = 1 << 24


def _gray_decode(v: int) -> int:
    """Inverse of the reflected Gray code g(n) = n ^ (n >> 1)."""
    n = 0
    while v:
        n ^= v
        v >>= 1
    return n


@dataclass(frozen=True)
class Constellation:
    """Square QAM constellation with unit average energy and Gray bit labels.

    ``points[k]`` is the complex symbol whose bit label is ``bit_map[k]``
    (the plain binary expansion of k, MSB first).  The Gray property lives
    in the geometry: amplitude-adjacent points differ in exactly one bit.
    """

    order: int
    points: np.ndarray          # (M,) complex128
    bits_per_symbol: int
    bit_map: np.ndarray         # (M, bits_per_symbol) uint8

    def bits_to_index(self, bits: np.ndarray) -> int:
        """Map a bit label (length bits_per_symbol, MSB first) to its symbol index."""
        weights = 1 << np.arange(self.bits_per_symbol - 1, -1, -1)
        return int(np.asarray(bits, dtype=np.int64) @ weights)


def build_constellation(order: int) -> Constellation:
    """Gray-coded square QAM with zero mean and unit average energy."""
    if order not in SUPPORTED_ORDERS:
        raise ConfigError(f"unsupported modulation order {order}; expected one of {SUPPORTED_ORDERS}")
    bps = int(round(np.log2(order)))
    half = bps // 2
    levels = 1 << half                      # amplitude levels per axis
    scale = 1.0 / np.sqrt(2.0 * (levels**2 - 1) / 3.0)
    amps = scale * (2.0 * np.arange(levels) - (levels - 1))

    points = np.empty(order, dtype=np.complex128)
    bit_map = np.zeros((order, bps), dtype=np.uint8)
    for k in range(order):
        i_bits = k >> half
        q_bits = k & (levels - 1)
        points[k] = amps[_gray_decode(i_bits)] + 1j * amps[_gray_decode(q_bits)]
        for b in range(bps):
            bit_map[k, b] = (k >> (bps - 1 - b)) & 1
    return Constellation(order=order, points=points, bits_per_symbol=bps, bit_map=bit_map)


@dataclass(frozen=True)
class CandidateSet:
    """All K = M^Nu transmit hypotheses in real-composite form.

    Candidates are ordered lexicographically with user 0 fastest-varying:
    ``index_map[k, u] = (k // M^u) % M``.
    """

    nu: int
    k_count: int
    vectors_real: np.ndarray    # (K, 2*Nu) float64
    index_map: np.ndarray       # (K, Nu) int64, per-user symbol indices


def enumerate_candidates(c: Constellation, nu: int) -> CandidateSet:
    if nu < 1:
        raise ConfigError(f"need at least one user, got nu={nu}")
    k_count = c.order**nu
    if k_count > MAX_CANDIDATES:
        raise ConfigError(f"candidate set size {c.order}^{nu} exceeds the {MAX_CANDIDATES} limit")

    ks = np.arange(k_count)
    index_map = np.empty((k_count, nu), dtype=np.int64)
    for u in range(nu):
        index_map[:, u] = (ks // (c.order**u)) % c.order
    complex_vectors = c.points[index_map]   # (K, Nu)
    vectors_real = to_real_composite(complex_vectors)
    return CandidateSet(nu=nu, k_count=k_count, vectors_real=vectors_real, index_map=index_map)


@dataclass(frozen=True)
class ChannelRealization:
    """A narrowband channel and its real-composite expansion."""

    h_complex: np.ndarray       # (Nr, Nu) complex128
    h_real: np.ndarray          # (2*Nr, 2*Nu) float64
    nr: int
    nu: int


def real_composite_matrix(h_complex: np.ndarray) -> np.ndarray:
    """[[Re H, -Im H], [Im H, Re H]] block expansion of a complex matrix."""
    re, im = h_complex.real, h_complex.imag
    return np.block([[re, -im], [im, re]])


def draw_channel(nr: int, nu: int, rng: np.random.Generator) -> ChannelRealization:
    """I.i.d. Rayleigh channel: entries circular complex Gaussian, unit variance."""
    if not nr >= nu >= 1:
        raise ConfigError(f"need nr >= nu >= 1, got nr={nr}, nu={nu}")
    parts = rng.normal(0.0, np.sqrt(0.5), size=(2, nr, nu))
    h_complex = parts[0] + 1j * parts[1]
    return ChannelRealization(
        h_complex=h_complex,
        h_real=real_composite_matrix(h_complex),
        nr=nr,
        nu=nu,
    )


@dataclass(frozen=True)
class LinkParams:
    """Transmit power, complex noise variance, and complex dither variance.

    Complex variance v means variance v/2 per real dimension.
    """

    rho: float
    n0: float
    sigma2: float = 0.0

    def __post_init__(self):
        if self.rho <= 0:
            raise ConfigError(f"rho must be positive, got {self.rho}")
        if self.n0 <= 0:
            raise ConfigError(f"n0 must be positive, got {self.n0}")
        if self.sigma2 < 0:
            raise ConfigError(f"sigma2 must be nonnegative, got {self.sigma2}")

    @property
    def gamma_db(self) -> float:
        return 10.0 * np.log10(self.rho / self.n0)

    @classmethod
    def from_snr_db(cls, gamma_db: float, sigma2_ratio: float = 0.0) -> "LinkParams":
        """Unit transmit power; noise variance set from the SNR in dB."""
        rho = 1.0
        return cls(rho=rho, n0=rho * 10.0 ** (-gamma_db / 10.0), sigma2=sigma2_ratio * rho)


def to_real_composite(v: np.ndarray) -> np.ndarray:
    """Stack [Re v; Im v] along the last axis."""
    v = np.asarray(v)
    return np.concatenate([v.real, v.imag], axis=-1).astype(np.float64)


def transmit(ch: ChannelRealization, s_real: np.ndarray, lp: LinkParams,
             rng: np.random.Generator) -> np.ndarray:
    """Noisy received vector(s) sqrt(rho)*H*s + n in the real-composite domain.

    ``s_real`` may be a single vector of length 2*Nu or a batch (..., 2*Nu);
    noise entries are i.i.d. Normal(0, n0/2).
    """
    s_real = np.asarray(s_real, dtype=np.float64)
    if s_real.shape[-1] != 2 * ch.nu:
        raise ConfigError(f"expected trailing dimension {2 * ch.nu}, got {s_real.shape[-1]}")
    mean = np.sqrt(lp.rho) * (s_real @ ch.h_real.T)
    noise = rng.normal(0.0, np.sqrt(lp.n0 / 2.0), size=mean.shape)
    return mean + noise


def quantize(r: np.ndarray) -> np.ndarray:
    """Element-wise one-bit quantizer; the probability-zero tie r == 0 maps to +1."""
    return np.where(np.asarray(r) >= 0, 1, -1).astype(np.int8)


def add_dither(r: np.ndarray, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Add Gaussian dither with variance sigma2/2 per real dimension."""
    if sigma2 < 0:
        raise ConfigError(f"sigma2 must be nonnegative, got {sigma2}")
    r = np.asarray(r, dtype=np.float64)
    if sigma2 == 0.0:
        return r.copy()
    return r + rng.normal(0.0, np.sqrt(sigma2 / 2.0), size=r.shape)
