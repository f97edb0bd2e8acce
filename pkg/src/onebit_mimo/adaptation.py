"""CRC-gated post update of likelihood tables during the data phase.

The data transmission is split into subframes, each carrying a 16-bit CRC.
Subframes that decode cleanly are recycled as extra pilots: the biased
variant merges their sign counts into the learned table (denominator
n_tr + d_k), the dithered variant blends the initial inverted table with a
table learned from the decoded subframes using a per-candidate update rate.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import rng as rngmod
from .detectors import indices_to_candidates, ml_detect_batch
from .errors import ConfigError
from .likelihood import LikelihoodTable, apply_bias, dither_invert, learn_likelihood_table, make_table
from .pilots import simulate_pilots
from .signal_model import (
    CandidateSet,
    Constellation,
    LinkParams,
    draw_channel,
    quantize,
    transmit,
)

CRC_POLY = 0x1021
CRC_INIT = 0xFFFF


def _build_crc_table() -> np.ndarray:
    table = np.empty(256, dtype=np.uint16)
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ CRC_POLY) & 0xFFFF if crc & 0x8000 else (crc << 1) & 0xFFFF
        table[byte] = crc
    return table


_CRC_TABLE = _build_crc_table()


def crc16(bits: np.ndarray) -> int:
    """CRC-16/CCITT-FALSE over a bit sequence (MSB-first, poly 0x1021, init 0xFFFF)."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size == 0:
        raise ConfigError("CRC over an empty payload is undefined")
    crc = CRC_INIT
    nbytes = bits.size // 8
    if nbytes:
        for byte in np.packbits(bits[: nbytes * 8]):
            crc = ((crc << 8) & 0xFFFF) ^ int(_CRC_TABLE[(crc >> 8) ^ byte])
    for bit in bits[nbytes * 8:]:
        fb = ((crc >> 15) & 1) ^ int(bit)
        crc = (crc << 1) & 0xFFFF
        if fb:
            crc ^= CRC_POLY
    return crc


def crc16_append(bits: np.ndarray) -> np.ndarray:
    """Payload with its 16 CRC bits appended, MSB first."""
    bits = np.asarray(bits, dtype=np.uint8)
    value = crc16(bits)
    crc_bits = (value >> np.arange(15, -1, -1)) & 1
    return np.concatenate([bits, crc_bits.astype(np.uint8)])


def crc16_check(bits: np.ndarray) -> bool:
    """True iff the trailing 16 bits equal the CRC of the preceding payload."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size <= 16:
        raise ConfigError("frame too short to contain a payload and a 16-bit CRC")
    expected = int(np.packbits(bits[-16:]).view(">u2")[0])
    return crc16(bits[:-16]) == expected


def crc16_batch(frames: np.ndarray) -> np.ndarray:
    """CRC values for many equal-length frames at once, shape (N,) uint16."""
    frames = np.asarray(frames, dtype=np.uint8)
    n, nbits = frames.shape
    crc = np.full(n, CRC_INIT, dtype=np.uint16)
    nbytes = nbits // 8
    if nbytes:
        packed = np.packbits(frames[:, : nbytes * 8], axis=1)
        for j in range(nbytes):
            idx = ((crc >> 8) ^ packed[:, j]).astype(np.intp)
            crc = ((crc << np.uint16(8)) ^ _CRC_TABLE[idx]).astype(np.uint16)
    for j in range(nbytes * 8, nbits):
        fb = ((crc >> 15) & 1).astype(np.uint16) ^ frames[:, j]
        crc = ((crc << np.uint16(1)) ^ (fb * np.uint16(CRC_POLY))).astype(np.uint16)
    return crc


def crc16_check_batch(frames: np.ndarray) -> np.ndarray:
    """Vectorized crc16_check over rows of a frame matrix."""
    frames = np.asarray(frames, dtype=np.uint8)
    if frames.shape[1] <= 16:
        raise ConfigError("frames too short to contain a payload and a 16-bit CRC")
    expected = np.packbits(frames[:, -16:], axis=1).view(">u2")[:, 0]
    return crc16_batch(frames[:, :-16]) == expected


@dataclass(frozen=True)
class FramePlan:
    """Data-phase frame structure: d subframes of n_d_sub symbol vectors each."""

    d: int
    n_d_sub: int
    crc_bits: int = 16
    genie_crc: bool = False     # subframe success = all vectors correct (no bit payload)
    update_enabled: bool = True

    def __post_init__(self):
        if self.d < 1 or self.n_d_sub < 1:
            raise ConfigError("d and n_d_sub must be positive")
        if self.crc_bits != 16:
            raise ConfigError("only 16-bit CRC is supported")

    def payload_bits_per_subframe(self, nu: int, bits_per_symbol: int) -> int:
        total = self.n_d_sub * nu * bits_per_symbol
        if total <= self.crc_bits:
            raise ConfigError(f"subframe carries {total} bits, not enough for a {self.crc_bits}-bit CRC")
        return total - self.crc_bits


@dataclass(frozen=True)
class UpdateState:
    """Table adaptation state after j subframes (v of them decoded)."""

    j: int
    v: int
    d_k: np.ndarray                 # (K,) decoded occurrences per candidate
    base_table: LikelihoodTable     # initial table p_hat(0)
    aux_table: LikelihoodTable      # table learned from decoded subframes p_hat(v_j)
    current: LikelihoodTable        # table used for detection
    mode: str                       # "biased" | "dithered"
    p_bias: float
    alpha_rule: str | float = "counts-proportional"


def init_update_state(base_table: LikelihoodTable, current: LikelihoodTable, mode: str,
                      p_bias: float, alpha_rule="counts-proportional") -> UpdateState:
    if mode not in ("biased", "dithered"):
        raise ConfigError(f"unknown update mode {mode!r}")
    k, dim = base_table.k_count, base_table.dim
    zeros = np.zeros((k, dim), dtype=np.int64)
    aux = make_table(np.full((k, dim), 0.5), zeros, zeros.copy())
    return UpdateState(
        j=0, v=0, d_k=np.zeros(k, dtype=np.int64),
        base_table=base_table, aux_table=aux, current=current,
        mode=mode, p_bias=p_bias, alpha_rule=alpha_rule,
    )


def _accumulate_aux(st: UpdateState, decoded_ks: np.ndarray, obs: np.ndarray):
    """Pool a decoded subframe's signs into the aux table counts."""
    decoded_ks = np.asarray(decoded_ks, dtype=np.int64)
    obs = np.asarray(obs)
    counts_one = st.aux_table.counts_one.copy()
    np.add.at(counts_one, decoded_ks, (obs > 0).astype(np.int64))
    d_k = st.d_k + np.bincount(decoded_ks, minlength=st.base_table.k_count)
    counts_total = np.repeat(d_k[:, None], st.base_table.dim, axis=1)
    p_aux = np.divide(counts_one, counts_total, out=np.full(counts_one.shape, 0.5),
                      where=counts_total > 0)
    aux = make_table(p_aux, counts_one, counts_total)
    return d_k, aux


def post_update_biased(st: UpdateState, decoded_ks: np.ndarray, obs: np.ndarray) -> UpdateState:
    """Count-merge update: recompute p over n_tr + d_k looks, re-floor residual zeros."""
    if st.mode != "biased":
        raise ConfigError("count-merge update applies to the biased mode")
    d_k, aux = _accumulate_aux(st, decoded_ks, obs)
    merged_one = st.base_table.counts_one + aux.counts_one
    merged_total = st.base_table.counts_total + aux.counts_total
    p = merged_one / merged_total
    merged = make_table(p, merged_one, merged_total, n_tr=st.base_table.n_tr)
    return replace(
        st,
        j=st.j + 1, v=st.v + 1, d_k=d_k, aux_table=aux,
        current=apply_bias(merged, st.p_bias),
    )


def post_update_dithered(st: UpdateState, decoded_ks: np.ndarray, obs: np.ndarray) -> UpdateState:
    """Convex blend p = alpha * p_hat(0) + (1 - alpha) * p_hat(v_j).

    The default update rate alpha = n_tr / (n_tr + d_k) weights the two
    tables by their sample counts; candidates never decoded keep the
    initial table (alpha forced to 1 there).
    """
    if st.mode != "dithered":
        raise ConfigError("the update-rate blend applies to the dithered mode")
    d_k, aux = _accumulate_aux(st, decoded_ks, obs)
    if st.alpha_rule == "counts-proportional":
        n_tr = st.base_table.n_tr
        alpha = n_tr / (n_tr + d_k.astype(np.float64))
    else:
        a = float(st.alpha_rule)
        if not 0.0 <= a <= 1.0:
            raise ConfigError(f"constant update rate must lie in [0, 1], got {a}")
        alpha = np.full(st.base_table.k_count, a)
    alpha = np.where(d_k > 0, alpha, 1.0)[:, None]
    p = alpha * st.base_table.p_one + (1.0 - alpha) * aux.p_one
    return replace(
        st,
        j=st.j + 1, v=st.v + 1, d_k=d_k, aux_table=aux,
        current=make_table(p, n_tr=st.base_table.n_tr),
    )


def skip_update(st: UpdateState) -> UpdateState:
    """Advance the subframe counter after a CRC failure (or with updates disabled)."""
    return replace(st, j=st.j + 1)


def bits_to_symbol_indices(bits: np.ndarray, c: Constellation, nu: int) -> np.ndarray:
    """Bit stream -> (n_sym, nu) symbol indices, time-major / user-minor."""
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1, c.bits_per_symbol)
    weights = 1 << np.arange(c.bits_per_symbol - 1, -1, -1)
    values = bits @ weights
    inverse = np.empty(c.order, dtype=np.int64)
    inverse[(c.bit_map @ weights).astype(np.int64)] = np.arange(c.order)
    return inverse[values].reshape(-1, nu)


def symbol_indices_to_bits(idx: np.ndarray, c: Constellation) -> np.ndarray:
    """(n_sym, nu) symbol indices -> flat bit stream, time-major / user-minor."""
    return c.bit_map[np.asarray(idx, dtype=np.int64)].reshape(-1).astype(np.uint8)


@dataclass(frozen=True)
class SessionTrace:
    """Per-subframe outcome of one adaptive session."""

    crc_pass: np.ndarray            # (D,) bool
    subframe_errors: np.ndarray     # (D,) int64, per-user symbol errors
    cumulative_v: np.ndarray        # (D,) int64
    symbols_per_subframe: int
    final_table: LikelihoodTable


def run_adaptive_session(
    plan: FramePlan,
    detector: str,
    c: Constellation,
    cs: CandidateSet,
    nr: int,
    lp: LinkParams,
    n_tr: int,
    p_bias: float,
    seed: int,
    trial: int = 0,
    alpha_rule="counts-proportional",
) -> SessionTrace:
    """Pilot phase followed by D CRC-gated data subframes for one channel draw.

    The decoded symbols (not the transmitted ones) feed the update, so a
    CRC false-accept poisons the table exactly as it would in the field.
    """
    if detector not in ("biased-ml", "dither-ml"):
        raise ConfigError(f"adaptive sessions support biased-ml and dither-ml, got {detector!r}")
    ch = draw_channel(nr, cs.nu, rngmod.substream(seed, trial, rngmod.CHANNEL))
    lp_data = LinkParams(rho=lp.rho, n0=lp.n0, sigma2=0.0)  # no dithering in the data phase

    want_dither = detector == "dither-ml"
    plain, dithered = simulate_pilots(
        ch, cs, lp, n_tr,
        noise_rng=rngmod.substream(seed, trial, rngmod.PILOT_NOISE),
        dither_rng=rngmod.substream(seed, trial, rngmod.PILOT_DITHER) if want_dither else None,
    )
    if want_dither:
        base = dither_invert(learn_likelihood_table(dithered), lp, p_clamp=p_bias)
        st = init_update_state(base, base, "dithered", p_bias, alpha_rule)
    else:
        raw = learn_likelihood_table(plain)
        st = init_update_state(raw, apply_bias(raw, p_bias), "biased", p_bias, alpha_rule)

    sym_rng = rngmod.substream(seed, trial, rngmod.DATA_SYMBOLS)
    noise_rng = rngmod.substream(seed, trial, rngmod.DATA_NOISE)
    bit_rng = rngmod.substream(seed, trial, rngmod.PAYLOAD_BITS)

    crc_pass = np.zeros(plan.d, dtype=bool)
    sub_errors = np.zeros(plan.d, dtype=np.int64)
    cum_v = np.zeros(plan.d, dtype=np.int64)
    for j in range(plan.d):
        if plan.genie_crc:
            ks_true = sym_rng.integers(0, cs.k_count, size=plan.n_d_sub)
        else:
            payload = bit_rng.integers(0, 2, size=plan.payload_bits_per_subframe(
                cs.nu, c.bits_per_symbol)).astype(np.uint8)
            frame_bits = crc16_append(payload)
            ks_true = indices_to_candidates(bits_to_symbol_indices(frame_bits, c, cs.nu), c.order)

        y = quantize(transmit(ch, cs.vectors_real[ks_true], lp_data, noise_rng))
        k_hat = ml_detect_batch(st.current, y, cs)
        sub_errors[j] = np.count_nonzero(cs.index_map[k_hat] != cs.index_map[ks_true])

        if plan.genie_crc:
            ok = bool(np.all(k_hat == ks_true))
        else:
            ok = crc16_check(symbol_indices_to_bits(cs.index_map[k_hat], c))
        crc_pass[j] = ok

        if ok and plan.update_enabled:
            if st.mode == "biased":
                st = post_update_biased(st, k_hat, y)
            else:
                st = post_update_dithered(st, k_hat, y)
        elif ok:
            st = replace(st, j=st.j + 1, v=st.v + 1)    # decoded, update switched off
        else:
            st = skip_update(st)
        cum_v[j] = st.v

    return SessionTrace(
        crc_pass=crc_pass,
        subframe_errors=sub_errors,
        cumulative_v=cum_v,
        symbols_per_subframe=plan.n_d_sub * cs.nu,
        final_table=st.current,
    )
