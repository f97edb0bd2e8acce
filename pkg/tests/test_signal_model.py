"""Constellations, candidate enumeration, channels, quantizer, dither."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onebit_mimo.errors import ConfigError
from onebit_mimo.rng import substream
from onebit_mimo.signal_model import (
    LinkParams,
    add_dither,
    build_constellation,
    draw_channel,
    enumerate_candidates,
    quantize,
    to_real_composite,
    transmit,
)


class TestConstellation:
    def test_4qam_points(self):
        c = build_constellation(4)
        expected = {(s1 + 1j * s2) / np.sqrt(2) for s1 in (-1, 1) for s2 in (-1, 1)}
        assert set(np.round(c.points, 12)) == {complex(np.round(p, 12)) for p in expected}

    def test_zero_mean(self):
        for order in (4, 16, 64):
            c = build_constellation(order)
            assert abs(np.mean(c.points)) < 1e-12

    @pytest.mark.parametrize("order", [4, 16, 64])
    def test_unit_energy(self, order):
        c = build_constellation(order)
        assert abs(np.mean(np.abs(c.points) ** 2) - 1.0) < 1e-12

    def test_16qam_spacing(self):
        # closed-form energy normalization: amplitude levels (2l-3)/sqrt(10)
        c = build_constellation(16)
        reals = np.unique(np.round(c.points.real, 12))
        assert np.allclose(reals, np.array([-3, -1, 1, 3]) / np.sqrt(10))

    def test_bit_map_bijection(self):
        for order in (4, 16, 64):
            c = build_constellation(order)
            packed = {tuple(row) for row in c.bit_map}
            assert len(packed) == order
            assert c.bit_map.shape == (order, c.bits_per_symbol)

    def test_gray_adjacency(self):
        # points adjacent along one axis differ in exactly one bit
        for order in (4, 16, 64):
            c = build_constellation(order)
            for axis in (np.real, np.imag):
                other = np.imag if axis is np.real else np.real
                for level in np.unique(np.round(other(c.points), 12)):
                    on_line = [k for k in range(order)
                               if abs(other(c.points[k]) - level) < 1e-9]
                    on_line.sort(key=lambda k: axis(c.points[k]))
                    for a, b in zip(on_line, on_line[1:]):
                        assert np.sum(c.bit_map[a] != c.bit_map[b]) == 1

    def test_unsupported_order(self):
        with pytest.raises(ConfigError):
            build_constellation(8)

    def test_bits_to_index_roundtrip(self):
        c = build_constellation(16)
        for k in range(16):
            assert c.bits_to_index(c.bit_map[k]) == k


class TestCandidates:
    def test_k_count_four_users(self):
        cs = enumerate_candidates(build_constellation(4), 4)
        assert cs.k_count == 256

    def test_k_count_single_user(self):
        cs = enumerate_candidates(build_constellation(4), 1)
        assert cs.k_count == 4

    def test_lexicographic_order(self):
        cs = enumerate_candidates(build_constellation(4), 2)
        assert list(cs.index_map[0]) == [0, 0]
        assert list(cs.index_map[5]) == [1, 1]
        # user 0 varies fastest
        assert list(cs.index_map[1]) == [1, 0]

    def test_vectors_match_composite_transform(self):
        c = build_constellation(4)
        cs = enumerate_candidates(c, 3)
        for k in (0, 17, 63):
            expected = to_real_composite(c.points[cs.index_map[k]])
            assert np.array_equal(cs.vectors_real[k], expected)

    def test_overflow_guard(self):
        with pytest.raises(ConfigError):
            enumerate_candidates(build_constellation(64), 5)   # 64^5 > 2^24


class TestRealComposite:
    def test_basic(self):
        assert np.array_equal(to_real_composite(np.array([1 + 2j])), [1.0, 2.0])
        assert np.array_equal(to_real_composite(np.array([0j])), [0.0, 0.0])

    def test_matrix_homomorphism(self):
        # to_real_composite(H s) == h_real @ s_real for random H, s
        rng = np.random.default_rng(42)
        for _ in range(20):
            nr, nu = rng.integers(1, 6, size=2)
            ch = draw_channel(max(nr, nu), nu, rng)
            s = rng.normal(size=nu) + 1j * rng.normal(size=nu)
            lhs = to_real_composite(ch.h_complex @ s)
            rhs = ch.h_real @ to_real_composite(s)
            assert np.max(np.abs(lhs - rhs)) < 1e-12


class TestChannel:
    def test_block_structure(self):
        ch = draw_channel(5, 3, substream(1, 0))
        nr, nu = 5, 3
        assert np.array_equal(ch.h_real[:nr, :nu], ch.h_complex.real)
        assert np.array_equal(ch.h_real[:nr, nu:], -ch.h_complex.imag)
        assert np.array_equal(ch.h_real[nr:, :nu], ch.h_complex.imag)
        assert np.array_equal(ch.h_real[nr:, nu:], ch.h_complex.real)

    def test_unit_entry_energy(self):
        ch = draw_channel(500, 200, substream(2, 0))    # 1e5 entries
        mean_e = np.mean(np.abs(ch.h_complex) ** 2)
        assert abs(mean_e - 1.0) < 0.02

    def test_deterministic(self):
        a = draw_channel(4, 2, substream(3, 1))
        b = draw_channel(4, 2, substream(3, 1))
        assert np.array_equal(a.h_complex, b.h_complex)

    def test_dimension_check(self):
        with pytest.raises(ConfigError):
            draw_channel(2, 3, substream(0, 0))


class TestTransmit:
    def test_noiseless_limit(self):
        ch = draw_channel(4, 2, substream(4, 0))
        s = enumerate_candidates(build_constellation(4), 2).vectors_real[7]
        lp = LinkParams(rho=2.0, n0=1e-30)
        r = transmit(ch, s, lp, substream(4, 1))
        assert np.max(np.abs(r - np.sqrt(2.0) * ch.h_real @ s)) < 1e-12

    def test_noise_variance(self):
        ch = draw_channel(1, 1, substream(5, 0))
        lp = LinkParams(rho=1e-30, n0=0.8)
        r = transmit(ch, np.zeros((50_000, 2)), lp, substream(5, 1))
        assert abs(np.var(r) - 0.4) < 0.4 * 0.02

    def test_deterministic(self):
        ch = draw_channel(3, 2, substream(6, 0))
        s = np.ones(4)
        lp = LinkParams(rho=1.0, n0=0.5)
        assert np.array_equal(
            transmit(ch, s, lp, substream(6, 1)),
            transmit(ch, s, lp, substream(6, 1)),
        )

    def test_length_check(self):
        ch = draw_channel(3, 2, substream(6, 0))
        with pytest.raises(ConfigError):
            transmit(ch, np.ones(3), LinkParams(rho=1.0, n0=1.0), substream(6, 1))


class TestQuantize:
    def test_signs(self):
        assert np.array_equal(quantize(np.array([1.2, -0.3])), [1, -1])

    def test_tie_to_plus_one(self):
        assert np.array_equal(quantize(np.array([0.0])), [1])

    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False,
                              min_value=-1e6, max_value=1e6), min_size=1, max_size=16),
           st.floats(min_value=1e-3, max_value=1e3))
    def test_positive_scale_invariance(self, values, c):
        r = np.array(values)
        assert np.array_equal(quantize(c * r), quantize(r))


class TestDither:
    def test_zero_variance_identity(self):
        r = np.arange(5.0)
        out = add_dither(r, 0.0, substream(7, 0))
        assert np.array_equal(out, r)

    def test_variance(self):
        d = add_dither(np.zeros(100_000), 0.6, substream(8, 0))
        assert abs(np.var(d) - 0.3) < 0.3 * 0.02

    def test_deterministic(self):
        r = np.ones(10)
        assert np.array_equal(
            add_dither(r, 1.0, substream(9, 0)),
            add_dither(r, 1.0, substream(9, 0)),
        )


class TestLinkParams:
    def test_gamma_db(self):
        lp = LinkParams(rho=2.0, n0=0.02)
        assert abs(lp.gamma_db - 20.0) < 1e-9

    def test_from_snr_db(self):
        lp = LinkParams.from_snr_db(13.0, sigma2_ratio=0.5)
        assert abs(lp.gamma_db - 13.0) < 1e-9
        assert lp.sigma2 == 0.5 * lp.rho

    def test_validation(self):
        with pytest.raises(ConfigError):
            LinkParams(rho=0.0, n0=1.0)
        with pytest.raises(ConfigError):
            LinkParams(rho=1.0, n0=-1.0)
        with pytest.raises(ConfigError):
            LinkParams(rho=1.0, n0=1.0, sigma2=-0.1)
