import math

import numpy as np
import pytest

from thermoformal import maps as M
from thermoformal import observables as O
from thermoformal import operator as T
from thermoformal import statistics as S
from thermoformal.errors import CoboundaryRefusedError

COS = lambda x: np.cos(2 * np.pi * np.asarray(x))
SIN = lambda x: np.sin(2 * np.pi * np.asarray(x))


@pytest.fixture(scope="module")
def doubling_state():
    d = M.doubling_map()
    tr = T.leading_triple(T.build_matrix(d, O.zero, "ulam", 1024))
    return d, tr, T.equilibrium_measure(tr)


class TestPressure:
    def test_values(self):
        assert S.pressure(2.0) == pytest.approx(math.log(2.0), abs=1e-15)
        assert S.pressure(1.0) == 0.0
        assert S.pressure(3.0) == pytest.approx(math.log(3.0), abs=1e-15)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            S.pressure(0.0)


class TestCorrelations:
    def test_doubling_cos_orthogonality(self, doubling_state):
        d, tr, st = doubling_state
        cs = S.correlations(d, st, COS, COS, 10)
        assert cs.values[0] == pytest.approx(0.5, abs=1e-12)
        assert np.max(np.abs(cs.values[1:])) < 1e-12
        assert cs.tau_hat is None  # everything below the noise floor

    def test_constant_observable(self, doubling_state):
        d, tr, st = doubling_state
        cs = S.correlations(d, st, lambda x: np.full_like(np.asarray(x), 2.0), COS, 5)
        assert np.max(np.abs(cs.values)) < 1e-14

    def test_c0_is_covariance(self, doubling_state):
        d, tr, st = doubling_state
        g = lambda x: np.asarray(x) ** 2
        cs = S.correlations(d, st, g, COS, 3)
        x = st.grid
        cov = float((g(x) * COS(x)) @ st.mu) - float(g(x) @ st.mu) * float(COS(x) @ st.mu)
        assert cs.values[0] == pytest.approx(cov, abs=1e-14)

    def test_mp_rate_below_gap(self):
        mp = M.mp_like_map()
        tr = T.leading_triple(T.build_matrix(mp, O.zero, "collocation", 1024))
        st = T.equilibrium_measure(tr)
        cs = S.correlations(mp, st, COS, COS, 30)
        assert cs.tau_hat is not None
        assert cs.tau_hat <= tr.gap_ratio + 0.05
        assert cs.tau_hat < 1.0


class TestCltVariance:
    def test_doubling_cos_half(self, doubling_state):
        d, tr, st = doubling_state
        vr = S.clt_variance(d, tr, COS, 64)
        assert vr.sigma2 == pytest.approx(0.5, abs=1e-6)
        assert not vr.coboundary

    def test_constant_zero_exact(self, doubling_state):
        d, tr, st = doubling_state
        vr = S.clt_variance(d, tr, lambda x: np.full_like(np.asarray(x), 1.3), 64)
        assert vr.sigma2 == 0.0
        assert vr.coboundary

    def test_coboundary_flagged(self):
        # quadrature error in the Green-Kubo series decays like n^-2; the
        # sub-1e-6 regime needs the largest dense grid
        d = M.doubling_map()
        tr = T.leading_triple(T.build_matrix(d, O.zero, "ulam", 4096))
        cob = O.coboundary(O.fourier_cos(1), d)
        vr = S.clt_variance(d, tr, cob.fn, 64)
        assert vr.sigma2 < 1e-6
        assert vr.coboundary

    def test_shift_invariance(self, doubling_state):
        d, tr, st = doubling_state
        a = S.clt_variance(d, tr, COS, 64).sigma2
        b = S.clt_variance(d, tr, lambda x: COS(x) + 2.4, 64).sigma2
        assert abs(a - b) < 1e-8

    def test_quadratic_scaling(self, doubling_state):
        d, tr, st = doubling_state
        a = S.clt_variance(d, tr, COS, 64).sigma2
        b = S.clt_variance(d, tr, lambda x: 3.0 * COS(x), 64).sigma2
        assert abs(b - 9.0 * a) < 1e-8


class TestCltEmpirical:
    def test_ks_below_threshold(self, doubling_state):
        d, tr, st = doubling_state
        vr = S.clt_variance(d, tr, COS, 64)
        rep = S.clt_empirical(d, st, COS, n=50, samples=100_000, seed=8, variance=vr)
        assert rep.ks_statistic < 0.02

    def test_bitwise_reproducible(self, doubling_state):
        d, tr, st = doubling_state
        vr = S.clt_variance(d, tr, COS, 64)
        a = S.clt_empirical(d, st, COS, n=40, samples=20_000, seed=77, variance=vr)
        b = S.clt_empirical(d, st, COS, n=40, samples=20_000, seed=77, variance=vr)
        assert a.ks_statistic == b.ks_statistic
        assert np.array_equal(a.quantiles, b.quantiles)

    def test_sample_size_scaling(self, doubling_state):
        # in the noise-dominated regime KS roughly halves when m -> 4m
        d, tr, st = doubling_state
        vr = S.clt_variance(d, tr, SIN, 64)
        small = S.clt_empirical(d, st, SIN, n=100, samples=25_000, seed=5, variance=vr)
        big = S.clt_empirical(d, st, SIN, n=100, samples=100_000, seed=5, variance=vr)
        assert small.ks_statistic / big.ks_statistic > 1.4
        assert big.ks_statistic < 0.01

    def test_refuses_coboundary(self, doubling_state):
        d, tr, st = doubling_state
        with pytest.raises(CoboundaryRefusedError):
            S.clt_empirical(d, st, lambda x: np.full_like(np.asarray(x), 2.0),
                            n=50, samples=1000, seed=1)


class TestSampling:
    def test_inverse_cdf_matches_weights(self, doubling_state):
        d, tr, st = doubling_state
        rng = S.rng_for(123, 0)
        xs = S.sample_from_state(st, 200_000, rng)
        hist, _ = np.histogram(xs, bins=16, range=(0, 1))
        assert np.max(np.abs(hist / 200_000 - 1.0 / 16)) < 5e-3

    def test_seed_splitting_is_stable(self):
        a = S.rng_for(9, 0).random(4)
        b = S.rng_for(9, 0).random(4)
        c = S.rng_for(9, 1).random(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
