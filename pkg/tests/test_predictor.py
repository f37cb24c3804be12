import dataclasses
import math

import numpy as np
import pytest

import closed_forms as cf
from ctpredict import (
    ConfigurationError,
    DegenerateDensityError,
    DomainError,
    InsufficientDataError,
    PredictorSpec,
    WindowError,
    apply_predictor,
    innovations_from_noise,
    predict_finite_section,
    predict_whole_past,
    prediction_function,
    simulate_ma,
    whiten_path,
)
from ctpredict.simulate import SamplePath


class TestSpec:
    def test_validation(self):
        with pytest.raises(DomainError):
            PredictorSpec(0.0)
        with pytest.raises(DomainError):
            PredictorSpec(-1.0)
        with pytest.raises(DomainError):
            PredictorSpec(1.0, 0.0)
        assert PredictorSpec(1.0).window == "WholePast"
        assert PredictorSpec(1.0, 2.0).window == "FiniteSection"


class TestWholePast:
    @pytest.mark.parametrize("tau", [0.1, 0.5, 1.0, 2.0])
    def test_closed_form(self, ou_factor, tau):
        rep = predict_whole_past(ou_factor, tau)
        assert abs(rep.sigma2 / cf.ou_sigma2(tau) - 1) < 1e-4

    @pytest.mark.parametrize("tau", [0.25, 1.0, 3.0])
    def test_two_pole(self, two_pole_factor, tau):
        assert abs(predict_whole_past(two_pole_factor, tau).sigma2 / cf.two_pole_sigma2(tau) - 1) < 1e-6

    def test_limits(self, ou_factor):
        assert predict_whole_past(ou_factor, 1e-9).sigma2 < 1e-8
        assert abs(predict_whole_past(ou_factor, 30.0).sigma2 - 1.0) < 1e-6
        with pytest.raises(DomainError):
            predict_whole_past(ou_factor, 0.0)

    def test_kernel_window(self, ou_factor):
        rep = predict_whole_past(ou_factor, 1.0)
        assert rep.kernel_s.max() <= -1.0 + 1e-12
        np.testing.assert_allclose(rep.kernel, cf.ou_cstar(rep.kernel_s), rtol=1e-6, atol=1e-9)
        assert rep.lag_steps == 256
        assert rep.diagnostics["dropped_energy"] < 1e-11

    def test_monotone_in_tau(self, ou_factor, two_pole_factor):
        taus = np.linspace(0.01, 5, 40)
        for f in (ou_factor, two_pole_factor):
            s = [predict_whole_past(f, t).sigma2 for t in taus]
            assert np.all(np.diff(s) >= 0)

    def test_not_aligned_has_no_taps(self, ou_factor):
        rep = predict_whole_past(ou_factor, 0.1)
        assert rep.taps is None


class TestFiniteSection:
    def test_closed_form(self, ou_factor):
        rep = predict_finite_section(ou_factor, 1.0, 1.0)
        assert abs(rep.sigma2 - 0.867144) < 1e-4
        assert abs(rep.sigma2 - cf.ou_sigma2_finite(1.0, 1.0)) < 1e-8

    def test_large_T(self, ou_factor):
        assert abs(predict_finite_section(ou_factor, 1.0, 15.0).sigma2 - cf.ou_sigma2(1.0)) < 1e-9

    def test_small_tau(self, ou_factor):
        for T in (0.25, 0.5, 1.0):
            assert abs(predict_finite_section(ou_factor, 1e-9, T).sigma2 - math.exp(-4 * T)) < 1e-7

    def test_monotone_in_T(self, ou_factor, two_pole_factor):
        for f in (ou_factor, two_pole_factor):
            wp = predict_whole_past(f, 0.5).sigma2
            s = [predict_finite_section(f, 0.5, T).sigma2 for T in np.linspace(0.05, 10, 30)]
            assert np.all(np.diff(s) <= 0)
            assert min(s) >= wp

    def test_kernel_window(self, ou_factor):
        rep = predict_finite_section(ou_factor, 1.0, 1.0)
        assert rep.kernel_s.max() == pytest.approx(-1.0)
        assert rep.kernel_s.min() == pytest.approx(-3.0)
        assert rep.taps.size == 512


class TestPredictionFunction:
    @pytest.mark.parametrize("tau", [0.5, 1.0, 2.0])
    def test_ou_constant(self, ou_factor, tau):
        psi = prediction_function(ou_factor, tau)
        v = psi.values[psi.mask]
        assert np.max(np.abs(v - math.exp(-tau))) < 1e-3
        assert psi.masked_fraction == 0.0
        assert psi.residual_gap < 1e-4

    def test_small_lag(self, ou_factor):
        psi = prediction_function(ou_factor, ou_factor.h)
        assert np.max(np.abs(psi.values - 1.0)) < 1e-2

    @pytest.mark.parametrize("tau", [0.5, 1.0])
    def test_kit_link(self, ou_factor, two_pole_factor, tau):
        for f in (ou_factor, two_pole_factor):
            psi = prediction_function(f, tau)
            s2 = predict_whole_past(f, tau).sigma2
            assert abs(psi.kit_sigma2 / s2 - 1) < 1e-3

    def test_masking_reported(self, ou_factor):
        c = ou_factor.c_freq.copy()
        c[:100] = 0.0
        f = dataclasses.replace(ou_factor, c_freq=c)
        psi = prediction_function(f, 1.0)
        assert psi.masked_fraction == pytest.approx(100 / c.size)
        assert np.all(np.isnan(psi.values[:100]))
        assert not psi.mask[:100].any()

    def test_all_masked(self, ou_factor):
        f = dataclasses.replace(ou_factor, c_freq=np.zeros_like(ou_factor.c_freq))
        with pytest.raises(DegenerateDensityError):
            prediction_function(f, 1.0)

    def test_gauge_invariance(self, ou_factor):
        a = prediction_function(ou_factor, 1.0)
        b = prediction_function(ou_factor.rotated(1.3), 1.0)
        np.testing.assert_allclose(np.abs(a.values), np.abs(b.values), rtol=1e-10)


class TestWhitening:
    @pytest.fixture(scope="class")
    @staticmethod
    def path(ou_factor):
        return simulate_ma(ou_factor, 40000, seed=11)

    def test_roundtrip(self, ou_factor, path):
        w = whiten_path(path, ou_factor)
        orig = innovations_from_noise(path)
        ref = orig.increments[w.start_index + path.noise_offset : w.start_index + path.noise_offset + len(w)]
        rel = np.sqrt(np.mean(np.abs(w.increments - ref) ** 2) / np.mean(np.abs(ref) ** 2))
        assert rel < 5e-2
        np.testing.assert_allclose(w.times, path.t[w.start_index : w.start_index + len(w)])
        assert abs(w.variance_ratio - 1) < 5 / math.sqrt(len(w))

    def test_whiteness(self, ou_factor, path):
        e = whiten_path(path, ou_factor).increments
        n = e.size
        se = ou_factor.h / math.sqrt(n)
        for lag in (1, 2, 5, 256):
            ac = np.mean(e[lag:] * np.conj(e[:-lag]))
            assert abs(ac) < 3 * se * math.sqrt(2), lag

    def test_zero_path(self, ou_factor):
        p = SamplePath(h=ou_factor.h, t=np.arange(30000) * ou_factor.h, values=np.zeros(30000, complex), seed=None, method="MA")
        assert np.all(whiten_path(p, ou_factor).increments == 0)

    def test_too_short(self, ou_factor):
        p = simulate_ma(ou_factor, 5000, seed=1)
        with pytest.raises(InsufficientDataError):
            whiten_path(p, ou_factor)

    def test_grid_mismatch(self, ou_factor):
        p = SamplePath(h=0.01, t=np.arange(100) * 0.01, values=np.ones(100), seed=None, method="MA")
        with pytest.raises(ConfigurationError):
            whiten_path(p, ou_factor)


class TestApplyPredictor:
    @pytest.fixture(scope="class")
    @staticmethod
    def setup(ou_factor):
        path = simulate_ma(ou_factor, 60000, seed=5)
        return path, whiten_path(path, ou_factor)

    def test_markov_form(self, ou_factor, setup):
        path, innov = setup
        rep = predict_whole_past(ou_factor, 1.0)
        need = rep.taps.size + rep.lag_steps
        k = np.arange(innov.start_index + need, innov.start_index + len(innov), 97)
        pred = apply_predictor(innov, rep, path.t[k])
        markov = math.exp(-1) * path.values[k - 256]
        rel = np.sqrt(np.mean(np.abs(pred - markov) ** 2) / np.mean(np.abs(markov) ** 2))
        assert rel < 5e-2

    def test_scalar_time(self, ou_factor, setup):
        path, innov = setup
        rep = predict_whole_past(ou_factor, 1.0)
        k = innov.start_index + 20000
        a = apply_predictor(innov, rep, path.t[k])
        b = apply_predictor(innov, rep, np.array([path.t[k]]))
        assert np.ndim(a) == 0 and a == b[0]

    def test_small_lag_reproduces_value(self, ou_factor, setup):
        path, innov = setup
        rep = predict_whole_past(ou_factor, ou_factor.h)
        k = np.arange(innov.start_index + 5000, innov.start_index + 20000, 101)
        pred = apply_predictor(innov, rep, path.t[k])
        rel = np.sqrt(np.mean(np.abs(pred - path.values[k]) ** 2) / np.mean(np.abs(path.values[k]) ** 2))
        # one innovation step is missing: relative error ≈ sqrt(σ²(h)) ≈ sqrt(2h)
        assert rel < 2 * math.sqrt(2 * ou_factor.h)

    def test_zero_innovations(self, ou_factor, setup):
        _, innov = setup
        z = dataclasses.replace(innov, increments=np.zeros_like(innov.increments))
        rep = predict_whole_past(ou_factor, 1.0)
        assert apply_predictor(z, rep, innov.times[-1]) == 0

    def test_window_error(self, ou_factor, setup):
        _, innov = setup
        rep = predict_whole_past(ou_factor, 1.0)
        with pytest.raises(WindowError) as info:
            apply_predictor(innov, rep, innov.times[100])
        assert info.value.diagnostics["missing_before"] > 0

    def test_finite_section_on_stored_noise(self, ou_factor):
        path = simulate_ma(ou_factor, 2000, seed=2)
        rep = predict_finite_section(ou_factor, 1.0, 1.0)
        innov = innovations_from_noise(path)
        k = path.values.size - 1
        p = apply_predictor(innov, rep, path.t[k])
        # the same sum written out from the generator noise
        j = np.arange(rep.lag_steps, rep.lag_steps + rep.taps.size)
        direct = np.sum(rep.taps * path.noise[k + path.noise_offset - j])
        assert abs(p - direct) < 1e-12
