"""Likelihood tables: CDF/quantile accuracy, learning, bias repair, dither inversion."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onebit_mimo.errors import ConfigError
from onebit_mimo.likelihood import (
    PilotObservations,
    apply_bias,
    csi_likelihood_table,
    dither_invert,
    dump_table_csv,
    learn_likelihood_table,
    load_table_csv,
    log_likelihood,
    log_likelihood_all,
    make_table,
    std_normal_cdf,
    std_normal_quantile,
)
from onebit_mimo.rng import substream
from onebit_mimo.signal_model import (
    CandidateSet,
    ChannelRealization,
    LinkParams,
    build_constellation,
    draw_channel,
    enumerate_candidates,
    real_composite_matrix,
)

# Frozen before the build with mpmath at 50 digits.
CDF_ORACLE = [
    (-8.0, 6.2209605742717841e-16),
    (-5.0, 2.8665157187919391e-7),
    (-3.0, 0.0013498980316300945),
    (-2.0, 0.022750131948179207),
    (-1.0, 0.15865525393145705),
    (-0.5, 0.3085375387259869),
    (-0.25, 0.40129367431707628),
    (0.0, 0.5),
    (0.25, 0.59870632568292372),
    (0.5, 0.6914624612740131),
    (1.0, 0.84134474606854295),
    (1.5, 0.93319279873114193),
    (2.0, 0.97724986805182079),
    (3.0, 0.99865010196836991),
    (5.0, 0.99999971334842812),
    (8.0, 0.99999999999999938),
]
QUANTILE_ORACLE = [
    (0.001, -3.0902323061678135),
    (0.01, -2.3263478740408411),
    (0.025, -1.9599639845400542),
    (0.1, -1.2815515655446004),
    (0.15865525393145707, -0.99999999999999991),
    (0.25, -0.67448975019608174),
    (0.5, 0.0),
    (0.75, 0.67448975019608174),
    (0.841344746068543, 1.0000000000000004),
    (0.9, 1.2815515655446006),
    (0.975, 1.9599639845400539),
    (0.99, 2.3263478740408408),
    (0.999, 3.0902323061678133),
]

PHI_1 = 0.84134474606854295
PHI_SQRT2 = 0.92135039647485743


def bpsk_pair(nr: int, rng) -> tuple[ChannelRealization, CandidateSet]:
    """Single-user antipodal candidate pair on a random channel (K = 2)."""
    ch = draw_channel(nr, 1, rng)
    vectors = np.array([[1.0, 0.0], [-1.0, 0.0]])
    cs = CandidateSet(nu=1, k_count=2, vectors_real=vectors,
                      index_map=np.array([[0], [1]]))
    return ch, cs


class TestNormalCdf:
    def test_against_oracle(self):
        for x, p in CDF_ORACLE:
            assert abs(std_normal_cdf(x) - p) < 1e-14

    def test_quantile_against_oracle(self):
        for p, x in QUANTILE_ORACLE:
            assert abs(std_normal_quantile(p) - x) < 1e-9

    def test_half_is_zero(self):
        assert std_normal_quantile(0.5) == 0.0

    def test_roundtrip_invertible_range(self):
        # p = cdf(x) keeps full information for x <= ~5.5; above that the
        # spacing of doubles near 1.0 caps what any quantile can recover.
        xs = np.arange(-8.0, 5.51, 0.25)
        err = np.abs(std_normal_quantile(std_normal_cdf(xs)) - xs)
        assert err.max() < 1e-9

    def test_roundtrip_upper_tail_information_bound(self):
        for x in (6.0, 7.0, 8.0):
            bound = 2.0**-53 / (np.exp(-x * x / 2) / np.sqrt(2 * np.pi)) + 1e-9
            assert abs(std_normal_quantile(std_normal_cdf(x)) - x) < bound

    def test_quantile_domain(self):
        for p in (0.0, 1.0, -0.5, 1.5):
            with pytest.raises(ValueError):
                std_normal_quantile(p)


class TestCsiTable:
    def test_zero_dot_gives_half(self):
        ch = draw_channel(2, 1, substream(10, 0))
        cs = CandidateSet(nu=1, k_count=1, vectors_real=np.zeros((1, 2)),
                          index_map=np.zeros((1, 1), dtype=np.int64))
        t = csi_likelihood_table(ch, cs, LinkParams(rho=1.0, n0=1.0))
        assert np.all(t.p_one == 0.5)

    def test_unit_argument(self):
        # engineer sqrt(2 rho / n0) * f.s = 1 -> p_one = Phi(1)
        h = np.array([[1.0 + 0.0j]])
        ch = ChannelRealization(h_complex=h, h_real=real_composite_matrix(h), nr=1, nu=1)
        cs = CandidateSet(nu=1, k_count=1, vectors_real=np.array([[1.0, 0.0]]),
                          index_map=np.zeros((1, 1), dtype=np.int64))
        t = csi_likelihood_table(ch, cs, LinkParams(rho=1.0, n0=2.0))
        assert abs(t.p_one[0, 0] - PHI_1) < 1e-6

    def test_negation_flips(self):
        ch, cs = bpsk_pair(4, substream(11, 0))
        t = csi_likelihood_table(ch, cs, LinkParams(rho=1.0, n0=0.5))
        # candidates are antipodal, so row 1 must complement row 0
        assert np.max(np.abs(t.p_one[1] - (1.0 - t.p_one[0]))) < 1e-15

    def test_monotone_in_dot(self):
        h = np.array([[1.0 + 0.0j]])
        ch = ChannelRealization(h_complex=h, h_real=real_composite_matrix(h), nr=1, nu=1)
        dots = np.linspace(-3, 3, 13)
        cs = CandidateSet(nu=1, k_count=13,
                          vectors_real=np.column_stack([dots, np.zeros(13)]),
                          index_map=np.zeros((13, 1), dtype=np.int64))
        t = csi_likelihood_table(ch, cs, LinkParams(rho=1.0, n0=1.0))
        assert np.all(np.diff(t.p_one[:, 0]) > 0)


class TestLearning:
    def test_simple_frequency(self):
        y = np.array([[[1], [1], [-1], [1]]], dtype=np.int8)     # (1, 4, 1)
        t = learn_likelihood_table(PilotObservations(y=y))
        assert t.p_one[0, 0] == 0.75
        assert t.counts_one[0, 0] == 3 and t.counts_total[0, 0] == 4

    def test_all_plus_one(self):
        y = np.ones((1, 5, 2), dtype=np.int8)
        t = learn_likelihood_table(PilotObservations(y=y))
        assert np.all(t.p_one == 1.0)
        assert np.all(np.isneginf(t.log_p_minus_one))

    def test_matches_counting_oracle(self):
        rng = np.random.default_rng(1234)
        y = np.where(rng.random((6, 17, 5)) < 0.3, 1, -1).astype(np.int8)
        t = learn_likelihood_table(PilotObservations(y=y))
        for k in range(6):
            for i in range(5):
                count = sum(1 for tt in range(17) if y[k, tt, i] == 1)
                assert t.p_one[k, i] == count / 17

    def test_statistical_consistency(self):
        # learned tables track the analytic table within 5 binomial sigmas
        ch = draw_channel(8, 2, substream(12, 0))
        cs = enumerate_candidates(build_constellation(4), 2)
        lp = LinkParams.from_snr_db(0.0)
        exact = csi_likelihood_table(ch, cs, lp)
        n_tr = 10_000
        means = np.sqrt(lp.rho) * (cs.vectors_real @ ch.h_real.T)
        noise_rng = substream(12, 1)
        counts = np.zeros_like(exact.p_one)
        for start in range(0, n_tr, 1000):
            block = noise_rng.normal(0.0, np.sqrt(lp.n0 / 2.0), size=(1000,) + means.shape)
            counts += np.sum(block + means > 0, axis=0)
        p_hat = counts / n_tr
        p = exact.p_one
        slack = 5.0 * np.sqrt(p * (1.0 - p) / n_tr)
        frac_ok = np.mean(np.abs(p_hat - p) <= slack + 1e-12)
        assert frac_ok >= 0.99


class TestBias:
    def test_zero_entries_floored(self):
        y = np.array([[[1], [1], [1]], [[1], [-1], [1]]], dtype=np.int8)   # (2, 3, 1)
        t = learn_likelihood_table(PilotObservations(y=y))
        b = apply_bias(t, 0.01)
        assert b.p_one[0, 0] == 0.99          # p(-1) was the zero entry
        assert b.p_one[1, 0] == t.p_one[1, 0]  # untouched

    def test_intermediate_untouched(self):
        t = make_table(np.array([[0.4, 0.0, 1.0]]), n_tr=10)
        b = apply_bias(t, 0.05)
        assert np.array_equal(b.p_one[0], [0.4, 0.05, 0.95])

    def test_paper_bias_value(self):
        assert abs(1e-2 / 30 - 3.3333333333333335e-4) < 1e-12

    def test_range_validation(self):
        t = make_table(np.array([[0.5]]), n_tr=30)
        apply_bias(t, 1e-2 / 30)
        for bad in (0.0, 1.0 / 30, 0.5, -1e-3):
            with pytest.raises(ConfigError):
                apply_bias(t, bad)

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        p = rng.integers(0, 11, size=(8, 6)) / 10.0
        t = make_table(p, n_tr=10)
        once = apply_bias(t, 0.01)
        twice = apply_bias(once, 0.01)
        assert np.array_equal(once.p_one, twice.p_one)

    def test_counts_carried(self):
        y = np.ones((2, 4, 3), dtype=np.int8)
        t = learn_likelihood_table(PilotObservations(y=y))
        b = apply_bias(t, 0.1)
        assert np.array_equal(b.counts_one, t.counts_one)
        assert np.array_equal(b.counts_total, t.counts_total)


class TestDitherInvert:
    def test_midpoint_fixed(self):
        t = make_table(np.array([[0.5]]), n_tr=10)
        out = dither_invert(t, LinkParams(rho=1.0, n0=1.0, sigma2=1.0), p_clamp=1e-3)
        assert abs(out.p_one[0, 0] - 0.5) < 1e-15

    def test_closed_form_roundtrip_point(self):
        # p~ = Phi(1), n0 + sigma2 = 2, n0 = 1  ->  psi = 1  ->  p = Phi(sqrt(2))
        t = make_table(np.array([[PHI_1]]), n_tr=10)
        out = dither_invert(t, LinkParams(rho=1.0, n0=1.0, sigma2=1.0), p_clamp=1e-6)
        assert abs(out.p_one[0, 0] - PHI_SQRT2) < 1e-5

    def test_analytic_roundtrip(self):
        # a csi table at effective noise n0 + sigma2 inverts to the csi table at n0
        ch = draw_channel(6, 2, substream(13, 0))
        cs = enumerate_candidates(build_constellation(4), 2)
        rho, n0, sigma2 = 1.0, 0.4, 0.4
        dithered = csi_likelihood_table(ch, cs, LinkParams(rho=rho, n0=n0 + sigma2))
        target = csi_likelihood_table(ch, cs, LinkParams(rho=rho, n0=n0))
        out = dither_invert(dithered, LinkParams(rho=rho, n0=n0, sigma2=sigma2), p_clamp=1e-12)
        assert np.max(np.abs(out.p_one - target.p_one)) < 1e-8

    def test_residual_zeros_clamped(self):
        t = make_table(np.array([[0.0, 1.0, 0.5]]), n_tr=20)
        out = dither_invert(t, LinkParams(rho=1.0, n0=0.1, sigma2=0.2), p_clamp=1e-3)
        assert np.all(out.p_one > 0.0) and np.all(out.p_one < 1.0)

    def test_needs_dither_variance(self):
        t = make_table(np.array([[0.5]]), n_tr=10)
        with pytest.raises(ConfigError):
            dither_invert(t, LinkParams(rho=1.0, n0=1.0, sigma2=0.0), p_clamp=1e-3)


class TestLogLikelihood:
    def test_uniform_table(self):
        t = make_table(np.full((3, 64), 0.5))
        y = np.where(np.arange(64) % 2 == 0, 1, -1).astype(np.int8)
        assert abs(log_likelihood(t, y, 1) - (-44.3614195558365)) < 1e-9

    def test_zero_probability_gives_neg_inf(self):
        t = make_table(np.array([[1.0, 0.5]]))
        assert log_likelihood(t, np.array([-1, 1], dtype=np.int8), 0) == -np.inf

    def test_matches_extended_precision_product(self):
        rng = np.random.default_rng(99)
        p = rng.uniform(0.01, 0.99, size=(7, 12))
        t = make_table(p)
        y = np.where(rng.random(12) < 0.5, 1, -1).astype(np.int8)
        for k in range(7):
            probs = np.where(y > 0, p[k], 1.0 - p[k]).astype(np.longdouble)
            expected = float(np.log(np.prod(probs)))
            assert abs(log_likelihood(t, y, k) - expected) < 1e-10
        all_scores = log_likelihood_all(t, y)
        for k in range(7):
            assert all_scores[k] == log_likelihood(t, y, k)


class TestTableInvariants:
    def test_probability_bounds_enforced(self):
        with pytest.raises(ConfigError):
            make_table(np.array([[1.2]]))

    def test_log_caches(self):
        p = np.array([[0.25, 1.0, 0.0]])
        t = make_table(p)
        assert t.log_p_one[0, 0] == np.log(0.25)
        assert t.log_p_one[0, 1] == 0.0
        assert np.isneginf(t.log_p_one[0, 2])
        assert np.isneginf(t.log_p_minus_one[0, 1])

    def test_tables_immutable(self):
        t = make_table(np.array([[0.5]]))
        with pytest.raises(ValueError):
            t.p_one[0, 0] = 0.1

    def test_csv_roundtrip(self, tmp_path):
        y = np.where(np.random.default_rng(3).random((4, 9, 5)) < 0.4, 1, -1).astype(np.int8)
        t = learn_likelihood_table(PilotObservations(y=y))
        path = tmp_path / "table.csv"
        dump_table_csv(t, path)
        back = load_table_csv(path)
        assert np.array_equal(back.p_one, t.p_one)
        assert np.array_equal(back.counts_one, t.counts_one)
        assert back.n_tr == t.n_tr


@given(st.integers(min_value=1, max_value=200), st.integers(min_value=0, max_value=200))
def test_learned_entry_is_exact_ratio(total, ones):
    # property: learned p equals counts ratio exactly, for any counts
    ones = min(ones, total)
    y = np.concatenate([np.ones(ones, dtype=np.int8), -np.ones(total - ones, dtype=np.int8)])
    t = learn_likelihood_table(PilotObservations(y=y.reshape(1, total, 1)))
    assert t.p_one[0, 0] == ones / total
