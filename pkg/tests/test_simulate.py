import dataclasses
import math
import warnings

import numpy as np
import pytest

from ctpredict import (
    ConfigurationError,
    PredictorSpec,
    SpectralModel,
    apply_predictor,
    monte_carlo_mse,
    predict_whole_past,
    simulate_ma,
    simulate_spectral,
    whiten_path,
)
from ctpredict.simulate import AliasingWarning, empirical_autocovariance, rng_for


def batch_means(x, lag, batches=50):
    n = x.size // batches
    est = np.array([np.mean(x[b * n + lag : (b + 1) * n] * np.conj(x[b * n : (b + 1) * n - lag])) for b in range(batches)])
    return est.mean(), est.std(ddof=1) / math.sqrt(batches)


class TestMovingAverage:
    @pytest.fixture(scope="class")
    @staticmethod
    def long_path(ou_factor):
        return simulate_ma(ou_factor, 10**6, seed=123, keep_noise=False)

    def test_lag_one_covariance(self, long_path):
        est, se = batch_means(long_path.values, 256)
        assert abs(est - math.exp(-1)) < 3 * se * math.sqrt(2)

    def test_variance(self, long_path):
        est, se = batch_means(long_path.values, 0)
        assert abs(est.real - 1.0) < 3 * se

    def test_stationarity(self, long_path):
        x = long_path.values
        halves = [batch_means(x[: x.size // 2], 128, 25), batch_means(x[x.size // 2 :], 128, 25)]
        (a, sa), (b, sb) = halves
        assert abs(a - b) < 3 * math.hypot(sa, sb) * math.sqrt(2)

    def test_zero_kernel(self, ou_factor):
        z = dataclasses.replace(ou_factor, c_time=np.zeros_like(ou_factor.c_time))
        p = simulate_ma(z, 100, seed=1)
        assert np.all(p.values == 0)

    def test_reproducible(self, ou_factor):
        a = simulate_ma(ou_factor, 500, seed=9, replicate=3)
        b = simulate_ma(ou_factor, 500, seed=9, replicate=3)
        c = simulate_ma(ou_factor, 500, seed=9, replicate=4)
        assert a.values.tobytes() == b.values.tobytes()
        assert a.values.tobytes() != c.values.tobytes()

    def test_noise_alignment(self, ou_factor):
        p = simulate_ma(ou_factor, 50, seed=4)
        g = ou_factor.taps(length=ou_factor.effective_support())
        k = 10
        direct = np.sum(g * p.noise[k + p.noise_offset - np.arange(g.size)])
        assert abs(direct - p.values[k]) < 1e-12

    def test_real_mode(self, ou_factor):
        p = simulate_ma(ou_factor, 1000, seed=2, real=True)
        assert np.isrealobj(p.values)

    def test_grid_mismatch(self, ou_factor):
        with pytest.raises(ConfigurationError):
            simulate_ma(ou_factor, 100, h=0.01, seed=0)


class TestSpectral:
    def test_ou_covariances(self, ou_model):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AliasingWarning)
            est = np.array(
                [empirical_autocovariance(simulate_spectral(ou_model, 65536, 1 / 256, seed=7, replicate=r).values, 512)[[0, 256, 512]] for r in range(24)]
            )
        mean = est.mean(axis=0)
        se = est.std(axis=0, ddof=1) / math.sqrt(est.shape[0])
        target = np.exp(-np.array([0.0, 1.0, 2.0]))
        assert np.all(np.abs(mean - target) < 3 * np.abs(se) * math.sqrt(2))

    def test_aliasing_warning(self, ou_model):
        with pytest.warns(AliasingWarning, match="aliased mass"):
            simulate_spectral(ou_model, 64, 1 / 256, seed=0)
        with warnings.catch_warnings():
            warnings.simplefilter("error", AliasingWarning)
            simulate_spectral(ou_model, 64, 1 / 128, seed=0)

    def test_single_line(self):
        mu = np.arange(-64, 65) / 16.0
        g = np.zeros(mu.size)
        g[70] = 16.0
        m = SpectralModel.sampled(mu, g, real=False)
        p = simulate_spectral(m, 300, 0.05, seed=1)
        assert np.ptp(np.abs(p.values)) < 1e-12 * np.abs(p.values).max()

    def test_fft_route_matches_direct_sum(self):
        m = SpectralModel.closed_form("ou", M=4, dmu=1 / 16)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AliasingWarning)
            p = simulate_spectral(m, 200, 1 / 32, seed=3)  # 1/(hΔμ) = 512: FFT route
            q = simulate_spectral(m, 200, 1 / 30, seed=3)  # not an integer: direct sum
        rng = rng_for(3, 0)
        zz = rng.standard_normal((m.mu.size, 2))
        coef = np.sqrt(m.values * m.weights) * (zz[:, 0] + 1j * zz[:, 1]) / math.sqrt(2.0)
        for path in (p, q):
            direct = np.exp(2j * np.pi * np.multiply.outer(path.t, m.mu)) @ coef
            np.testing.assert_allclose(path.values, direct, atol=1e-10)

    def test_real_mode(self, ou_model):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AliasingWarning)
            p = simulate_spectral(ou_model, 1000, 1 / 256, seed=5, real=True)
        assert np.isrealobj(p.values)

    def test_methods_agree(self, ou_model, ou_factor):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AliasingWarning)
            sp = np.array([empirical_autocovariance(simulate_spectral(ou_model, 65536, 1 / 256, seed=8, replicate=r).values, 256)[[0, 128, 256]] for r in range(16)])
        ma = np.array([empirical_autocovariance(simulate_ma(ou_factor, 65536, seed=8, replicate=r, keep_noise=False).values, 256)[[0, 128, 256]] for r in range(16)])
        d = sp.mean(axis=0) - ma.mean(axis=0)
        se = np.sqrt(sp.var(axis=0, ddof=1) / 16 + ma.var(axis=0, ddof=1) / 16)
        assert np.all(np.abs(d) < 3 * se * math.sqrt(2))


class TestMonteCarlo:
    def test_finite_section_small(self, ou_factor):
        mc = monte_carlo_mse(ou_factor, PredictorSpec(1.0, 1.0), 2000, seed=1)
        assert mc.stderr > 0 and mc.n == 2000
        assert abs(mc.z) < 3
        assert mc.theory == pytest.approx(0.867144, abs=1e-4)

    def test_whole_past_matches_public_pipeline(self, ou_factor):
        mc = monte_carlo_mse(ou_factor, PredictorSpec(1.0), 3, seed=42, keep_samples=True, min_replicates=1)
        s = mc.samples
        rep = predict_whole_past(ou_factor, 1.0)
        for r in range(3):
            path = simulate_ma(ou_factor, s["n_points"], seed=42, replicate=r, keep_noise=False)
            innov = whiten_path(path, ou_factor)
            p = apply_predictor(innov, rep, path.t[s["k_path"]])
            assert abs(p - s["prediction"][r]) < 1e-10
            assert abs(path.values[s["k_path"]] - s["target"][r]) < 1e-10

    def test_reproducible(self, ou_factor):
        a = monte_carlo_mse(ou_factor, PredictorSpec(1.0, 1.0), 200, seed=5)
        b = monte_carlo_mse(ou_factor, PredictorSpec(1.0, 1.0), 200, seed=5)
        assert a == b

    def test_underpowered_runs(self, ou_factor):
        with pytest.warns(UserWarning):
            mc = monte_carlo_mse(ou_factor, PredictorSpec(1.0, 1.0), 10, seed=5)
        assert mc.n == 10 and mc.stderr > 0

    def test_order_insensitive_streams(self, ou_factor):
        # replicate r depends only on (seed, r): a longer run starts with the shorter one
        a = monte_carlo_mse(ou_factor, PredictorSpec(1.0, 1.0), 150, seed=3, keep_samples=True)
        b = monte_carlo_mse(ou_factor, PredictorSpec(1.0, 1.0), 300, seed=3, keep_samples=True, batch=7)
        np.testing.assert_array_equal(a.samples["residual"], b.samples["residual"][:150])

    def test_stderr_scaling(self, ou_factor):
        se = [monte_carlo_mse(ou_factor, PredictorSpec(0.5, 0.5), n, seed=11).stderr for n in (2000, 4000)]
        assert 1.2 <= se[0] / se[1] <= 1.7

    def test_theory_override(self, ou_factor):
        mc = monte_carlo_mse(ou_factor, PredictorSpec(1.0, 1.0), 500, seed=2, theory=0.5)
        assert mc.theory == 0.5 and mc.z > 3

    def test_unaligned_lag(self, ou_factor):
        with pytest.raises(ConfigurationError):
            monte_carlo_mse(ou_factor, PredictorSpec(0.1), 200, seed=1)


def mean_se(v):
    return v.mean(), v.std(ddof=1) / math.sqrt(v.size)


@pytest.mark.parametrize("T", [None, 1.0])
def test_pythagoras(ou_factor, T):
    mc = monte_carlo_mse(ou_factor, PredictorSpec(1.0, T), 3000, seed=21, keep_samples=True)
    s = mc.samples
    # |X|² = |X̂|² + |X - X̂|² + 2 Re(X̂ conj(X - X̂)); the cross term has mean zero
    cross = 2 * np.real(s["prediction"] * np.conj(s["residual"]))
    m, se = mean_se(cross)
    assert abs(m) < 3 * se
    # and the energy split matches r(0) = ‖X̂‖² + σ²
    m, se = mean_se(np.abs(s["prediction"]) ** 2)
    assert abs(m - (1.0 - mc.theory)) < 3 * se


def test_residual_orthogonal_to_past(ou_factor):
    mc = monte_carlo_mse(ou_factor, PredictorSpec(1.0), 3000, seed=22, keep_samples=True)
    v = mc.samples["residual"] * np.conj(mc.samples["past"])
    for part in (v.real, v.imag):
        m, se = mean_se(part)
        assert abs(m) < 3 * se
