import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from nanonmr.envelopes import EnvelopeKind
from nanonmr.estimate import (AutocorrResult, FitModelSpec, autocorrelation, estimator_distribution,
                              fit_autocorrelation, fourier_baseline, levenberg_marquardt, model_curve,
                              slice_blocks)
from nanonmr.simulate import PhotonTrace


def _brute_acf(x, k_max, biased=True, mean_subtract=True):
    x = np.asarray(x, dtype=float)
    if mean_subtract:
        x = x - x.mean()
    n = x.size
    out = []
    for k in range(k_max + 1):
        s = sum(x[i] * x[i + k] for i in range(n - k))
        out.append(s / (n if biased else n - k))
    return np.array(out)


@settings(max_examples=60, deadline=None)
@given(arrays(np.int64, st.integers(4, 60), elements=st.integers(0, 20)), st.booleans(), st.booleans())
def test_fft_acf_matches_brute_force(counts, biased, mean_subtract):
    tr = PhotonTrace(counts, 1e-6)
    k_max = counts.size // 2
    ac = autocorrelation(tr, biased=biased, mean_subtract=mean_subtract)
    ref = _brute_acf(counts, k_max, biased, mean_subtract)
    scale = max(1.0, np.abs(ref).max())
    assert np.allclose(ac.values, ref[1:], atol=1e-11 * scale)
    assert ac.lag0 == pytest.approx(ref[0], abs=1e-11 * scale)
    assert np.array_equal(ac.n_pairs, counts.size - np.arange(1, k_max + 1))


def test_acf_lag0_is_variance_and_lags_exact():
    rng = np.random.default_rng(0)
    tr = PhotonTrace(rng.poisson(3.0, 1000), 25e-6)
    ac = autocorrelation(tr, 25e-6 * 10)
    assert ac.lag0 == pytest.approx(tr.counts.var(), rel=1e-12)
    assert ac.lags.size == 10 and ac.lags[-1] == pytest.approx(2.5e-4)
    with pytest.raises(ValueError):
        autocorrelation(tr, 1.0)


def test_slice_blocks_average_and_concatenate():
    rng = np.random.default_rng(1)
    counts = rng.poisson(2.0, 1000)
    tr = PhotonTrace(counts, 1e-6)
    groups = slice_blocks(tr, 100e-6, 3, 20e-6)
    assert len(groups) == 3  # 10 blocks -> 3 full groups of 3
    manual = np.mean([autocorrelation(PhotonTrace(counts[i:i + 100], 1e-6), 20e-6).values
                      for i in (300, 400, 500)], axis=0)
    assert np.allclose(groups[1].values, manual, rtol=1e-12)
    cat = slice_blocks(tr, 100e-6, 3, 20e-6, mode="concatenate")
    assert np.allclose(cat[0].values, autocorrelation(PhotonTrace(counts[:300], 1e-6), 20e-6).values)
    with pytest.raises(ValueError):
        slice_blocks(tr, 100e-6, 11)


def test_lm_bound_active_solution():
    # unconstrained minimum at x = -1 lies outside [0, 2]
    res = levenberg_marquardt(lambda x: np.array([x[0] + 1.0, 0.5 * (x[1] - 1.5)]), [1.0, 0.2], [0, 0], [2, 2])
    assert res.converged
    assert res.x == pytest.approx([0.0, 1.5], abs=1e-8)


def test_lm_rosenbrock():
    fun = lambda x: np.array([10 * (x[1] - x[0] ** 2), 1 - x[0]])  # noqa: E731
    res = levenberg_marquardt(fun, [-1.2, 1.0], [-5, -5], [5, 5], max_iter=500)
    assert res.converged and res.x == pytest.approx([1.0, 1.0], abs=1e-6)


def _synthetic_ac(params, kind, n_lags=200, spacing=25e-6, n_samples=100000, nuisance=False, noise=0.0, seed=0):
    lags = spacing * np.arange(1, n_lags + 1)
    pairs = n_samples - np.arange(1, n_lags + 1)
    vals = pairs / n_samples * model_curve(params, lags, kind, nuisance)
    if noise:
        vals = vals + noise * np.random.default_rng(seed).standard_normal(n_lags)
    return AutocorrResult(lags, vals, pairs, True, spacing, 1.0, n_samples, True)


@pytest.mark.parametrize("kind", [EnvelopeKind.EXPONENTIAL, EnvelopeKind.POWER_LAW])
def test_fit_recovers_noiseless_parameters(kind):
    truth = {"amplitude": 0.02, "delta": 2 * math.pi * 3e3, "t_d": 4e-4}
    ac = _synthetic_ac(truth, kind)
    fit = fit_autocorrelation(ac, FitModelSpec.default_for(ac, kind), n_starts=20, seed=3,
                              coarse_max_lag=40 * 25e-6)
    assert fit.converged
    for k, v in truth.items():
        assert fit.params[k] == pytest.approx(v, rel=1e-6)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-10)


def test_fit_with_nuisance_term():
    truth = {"amplitude": 0.02, "delta": 2 * math.pi * 3e3, "t_d": 4e-4,
             "nuisance_amplitude": 0.01, "t_exp": 2e-3, "offset": 1e-3}
    kind = EnvelopeKind.EXPONENTIAL
    ac = _synthetic_ac(truth, kind, n_lags=400, nuisance=True)
    spec = FitModelSpec.default_for(ac, kind, include_nuisance=True)
    fit = fit_autocorrelation(ac, spec, n_starts=30, seed=1, coarse_max_lag=100 * 25e-6)
    assert fit.converged
    assert fit.params["delta"] == pytest.approx(truth["delta"], rel=1e-4)
    assert fit.joint_params["t_exp"] == pytest.approx(truth["t_exp"], rel=1e-2)
    assert set(fit.params) == {"amplitude", "delta", "t_d"}


def test_fit_seeded_reproducible():
    truth = {"amplitude": 0.02, "delta": 2 * math.pi * 3e3, "t_d": 4e-4}
    ac = _synthetic_ac(truth, EnvelopeKind.EXPONENTIAL, noise=2e-3)
    spec = FitModelSpec.default_for(ac, "exp")
    a = fit_autocorrelation(ac, spec, 10, 7, 1e-3)
    b = fit_autocorrelation(ac, spec, 10, 7, 1e-3)
    assert a == b


def test_spec_validation():
    with pytest.raises(ValueError):
        FitModelSpec("exp", False, {"amplitude": (0, 1), "delta": (0, 1)})
    with pytest.raises(ValueError):
        FitModelSpec("exp", False, {"amplitude": (0, 1), "delta": (1, 0), "t_d": (0, 1)})


def test_estimator_distribution_statistics():
    truth = {"amplitude": 0.02, "delta": 2 * math.pi * 3e3, "t_d": 4e-4}
    acs = [_synthetic_ac(truth, EnvelopeKind.EXPONENTIAL, noise=1e-3, seed=s) for s in range(6)]
    spec = lambda ac: FitModelSpec.default_for(ac, "exp")  # noqa: E731
    one = estimator_distribution(acs, spec, 10, 5, reference_delta=truth["delta"], coarse_max_lag=1e-3)
    two = estimator_distribution(acs, spec, 10, 5, reference_delta=truth["delta"], coarse_max_lag=1e-3, workers=3)
    assert np.array_equal(one.estimates, two.estimates)
    assert one.rmse == pytest.approx(math.sqrt(np.mean((one.estimates - truth["delta"]) ** 2)))
    assert one.histogram[1].sum() == one.estimates.size
    with pytest.raises(ValueError):
        estimator_distribution(acs[:1], spec)


def test_fourier_baseline_lorentzian_width():
    t_d, f0, dt = 1e-3, 5e3, 1e-5
    truth = {"amplitude": 1.0, "delta": 2 * math.pi * f0, "t_d": t_d}
    ac = _synthetic_ac(truth, EnvelopeKind.EXPONENTIAL, n_lags=3000, spacing=dt, n_samples=10 ** 9)
    fb = fourier_baseline(ac, 4)
    assert fb.peak_frequency == pytest.approx(f0, rel=1e-3)
    # e^{-t/T} cos(2 pi f0 t) has a Lorentzian line of half width 1 / (2 pi T)
    assert fb.half_fwhm == pytest.approx(1 / (2 * math.pi * t_d), rel=0.02)


def test_fourier_baseline_rejects_flat_spectrum():
    lags = np.arange(1, 101) * 1e-6
    ac = AutocorrResult(lags, np.zeros(100), np.arange(100, 0, -1), True, 1e-6, 0.0, 200, True)
    with pytest.raises(ArithmeticError):
        fourier_baseline(ac)
