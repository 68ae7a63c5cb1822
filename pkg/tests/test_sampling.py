import numpy as np
import pytest
from scipy import stats

from hqs.hilbert import DimensionError, StateVector, born_weights, ProjectiveMeasurement
from hqs.sampling import (
    FixedState,
    FullRefresh,
    HaarUniform,
    HiddenSource,
    Mixture,
    Persistent,
    ProductHaar,
    RandomStream,
    haar_amplitudes,
    hidden_amplitudes,
    refresh_amplitudes,
    refresh_hidden,
    sample_haar,
    sample_hidden,
)


def q1(amps):
    return np.abs(amps[:, 0]) ** 2


class TestRandomStream:
    def test_block_alignment_independent_of_batching(self):
        rs = RandomStream(11, 3)
        whole = rs.uniforms(0, 50, 7)
        np.testing.assert_array_equal(whole[17:23], rs.uniforms(17, 23, 7))
        np.testing.assert_array_equal(whole[49:50], rs.uniforms(49, 50, 7))

    def test_open_unit_interval(self):
        u = RandomStream(0).uniforms(0, 10_000, 4)
        assert u.min() > 0 and u.max() < 1

    def test_streams_differ(self):
        a = RandomStream(5, 0).uniforms(0, 4, 4)
        b = RandomStream(5, 1).uniforms(0, 4, 4)
        c = RandomStream(6, 0).uniforms(0, 4, 4)
        assert not np.array_equal(a, b) and not np.array_equal(a, c)

    def test_seed_range(self):
        RandomStream(2**64 - 1)
        with pytest.raises(ValueError):
            RandomStream(2**64)
        with pytest.raises(ValueError):
            RandomStream(-1)


def test_sample_haar_rejects_dim_one():
    with pytest.raises(DimensionError):
        sample_haar(1, RandomStream(0))


def test_sample_haar_normalized():
    amps = haar_amplitudes(5, RandomStream(1), 0, 1000)
    assert np.max(np.abs(np.linalg.norm(amps, axis=1) - 1)) < 1e-12


def test_qubit_weight_uniform():
    # Prob(q1 > c) = 1 - c for D = 2
    q = q1(haar_amplitudes(2, RandomStream(2), 0, 100_000))
    for c in (0.1, 0.5, 0.9):
        assert abs(np.mean(q > c) - (1 - c)) < 0.005


def test_d4_tail_probability():
    q = q1(haar_amplitudes(4, RandomStream(3), 0, 100_000))
    # 0.5**3; standard error ~0.001
    assert abs(np.mean(q > 0.5) - 0.125) < 0.005


@pytest.mark.parametrize("dim", [2, 3, 5])
def test_mean_weight_is_one_over_dim(dim):
    w = np.abs(haar_amplitudes(dim, RandomStream(4), 0, 100_000)) ** 2
    assert np.max(np.abs(w.mean(axis=0) - 1 / dim)) < 0.005


@pytest.mark.parametrize("dim", [2, 3, 4, 6])
def test_marginal_beta_law(dim):
    q = q1(haar_amplitudes(dim, RandomStream(5, dim), 0, 10_000))
    assert stats.kstest(q, stats.beta(1, dim - 1).cdf).pvalue > 0.01


def test_unitary_invariance_two_sample():
    dim = 3
    amps = haar_amplitudes(dim, RandomStream(6), 0, 10_000)
    rng = np.random.default_rng(0)
    v = StateVector([1, 0, 0])
    u = stats.unitary_group.rvs(dim, random_state=rng)
    w = StateVector(u @ v.amplitudes)
    qa = np.abs(amps @ v.amplitudes.conj()) ** 2
    qb = np.abs(amps @ w.amplitudes.conj()) ** 2
    n = qa.size
    crit = 1.628 * np.sqrt(2 / n)  # two-sample KS critical value at 1%
    assert stats.ks_2samp(qa, qb).statistic < crit


def test_simplex_exchangeability():
    # Dirichlet(1,1,1,1): every weight has mean 1/4 and second moment 2/(4*5)
    w = np.abs(haar_amplitudes(4, RandomStream(7), 0, 50_000)) ** 2
    for moment, target in ((1, 0.25), (2, 0.1)):
        x = w ** moment
        m = x.mean(axis=0)
        se = x.std(axis=0) / np.sqrt(x.shape[0])
        assert np.all(np.abs(m - target) < 3 * se)
        for i in range(4):
            for j in range(i + 1, 4):
                assert abs(m[i] - m[j]) < 3 * np.hypot(se[i], se[j])


class TestSampleHidden:
    def test_fixed_state(self):
        phi = StateVector([1, 2, 3])
        src = HiddenSource(FixedState(phi), seed=9)
        for t in (0, 7, 1000):
            np.testing.assert_array_equal(sample_hidden(src, t).amplitudes, phi.amplitudes)

    def test_haar_deterministic(self):
        src = HiddenSource(HaarUniform(3), seed=42)
        a = sample_hidden(src, 12)
        b = sample_hidden(src, 12)
        assert a.amplitudes.tobytes() == b.amplitudes.tobytes()
        assert not np.array_equal(a.amplitudes, sample_hidden(src, 13).amplitudes)

    def test_order_independent(self):
        src = HiddenSource(HaarUniform(4), seed=1)
        batch = hidden_amplitudes(src, 100, 110)
        single = sample_hidden(src, 105).amplitudes
        np.testing.assert_allclose(batch[5], single, atol=1e-15)

    def test_product_haar_schmidt_rank_one(self):
        src = HiddenSource(ProductHaar((2, 2)), seed=3)
        for t in range(20):
            phi = sample_hidden(src, t)
            sv = np.linalg.svd(phi.amplitudes.reshape(2, 2), compute_uv=False)
            assert sv[1] < 1e-10

    def test_product_haar_dims(self):
        assert ProductHaar((2, 3)).dim == 6
        with pytest.raises(DimensionError):
            ProductHaar((1, 2))

    def test_product_factor_marginal(self):
        # each factor is Haar on its own space: |<0|phi_A>|^2 ~ Beta(1, 1)
        amps = hidden_amplitudes(HiddenSource(ProductHaar((2, 3)), seed=8), 0, 10_000)
        qa = np.abs(amps.reshape(-1, 2, 3)[:, 0, :]) ** 2
        assert stats.kstest(qa.sum(axis=1), stats.uniform.cdf).pvalue > 0.01


class TestRefresh:
    def setup_method(self):
        self.prev = StateVector([1, 1j, 0])

    def test_persistent(self):
        src = HiddenSource(HaarUniform(3), seed=1, refresh=Persistent())
        np.testing.assert_array_equal(refresh_hidden(src, self.prev, 3, trial_index=5).amplitudes,
                                      self.prev.amplitudes)

    def test_full_is_fresh_sample(self):
        src = HiddenSource(HaarUniform(3), seed=1, refresh=FullRefresh())
        out = refresh_hidden(src, self.prev, 3, trial_index=5)
        np.testing.assert_array_equal(out.amplitudes, sample_hidden(src, 5, stream=3).amplitudes)

    def test_kappa_zero_equals_full(self):
        full = HiddenSource(HaarUniform(3), seed=1, refresh=FullRefresh())
        mix = HiddenSource(HaarUniform(3), seed=1, refresh=Mixture(0.0))
        prev = hidden_amplitudes(full, 0, 500)
        np.testing.assert_array_equal(refresh_amplitudes(full, prev, 0, 2), refresh_amplitudes(mix, prev, 0, 2))

    def test_kappa_one_equals_persistent(self):
        mix = HiddenSource(HaarUniform(3), seed=1, refresh=Mixture(1.0))
        prev = hidden_amplitudes(mix, 0, 500)
        np.testing.assert_array_equal(refresh_amplitudes(mix, prev, 0, 2), prev)

    def test_kappa_keep_rate(self):
        mix = HiddenSource(HaarUniform(2), seed=4, refresh=Mixture(0.3))
        prev = hidden_amplitudes(mix, 0, 20_000)
        kept = np.all(refresh_amplitudes(mix, prev, 0, 1) == prev, axis=1)
        assert abs(kept.mean() - 0.3) < 0.015

    def test_invalid_kappa(self):
        with pytest.raises(ValueError):
            Mixture(1.5)

    def test_dimension_mismatch(self):
        src = HiddenSource(HaarUniform(2), seed=1)
        with pytest.raises(DimensionError):
            refresh_hidden(src, self.prev, 1)


def test_born_weights_of_samples_use_measurement_basis():
    m = ProjectiveMeasurement.computational(3)
    amps = hidden_amplitudes(HiddenSource(HaarUniform(3), seed=0), 0, 10)
    np.testing.assert_allclose(born_weights(m, amps), np.abs(amps) ** 2, atol=1e-15)
