import math

import numpy as np
import pytest
from scipy.optimize import brentq

from nanonmr.envelopes import EnvelopeKind
from nanonmr.fisher import ReadoutParams
from nanonmr.protocol import (GAMMA_ELECTRON, ReadoutTrace, SensorPhysics, brms_from_depth,
                              depth_from_brms, larmor_shift, optimize_tau, phi_rms_from,
                              qdyne_signal, qdyne_snr_rate, read_readout_trace,
                              readout_window_optimize, sample_rate_compensation, snr_shot_noise,
                              snr_shot_noise_chi, undersample_min_step, undersample_step)

READOUT = ReadoutParams(0.04, 0.03)


def test_undersample_integer_arithmetic():
    t_min = undersample_min_step(2e6, 2e3)
    assert t_min == 1.0 / 1998000.0
    t_s, k = undersample_step(2e6, 2e3, 10)
    # (f_L - f_t) / f_t / (n - 1) = 999 / 9 = 111 exactly
    assert k == 111
    assert t_s == 111 * t_min


def test_undersample_rounding_and_clamp():
    # ratio 999 / 4 = 249.75 rounds to 250
    assert undersample_step(2e6, 2e3, 5)[1] == 250
    assert undersample_step(2e6, 1.5e6, 10)[1] == 1
    with pytest.raises(ValueError):
        undersample_step(2e6, 3e6, 10)
    with pytest.raises(ValueError):
        undersample_step(2e6, 2e3, 1)


def test_snr_values_and_sqrt_n_scaling():
    assert snr_shot_noise(READOUT, 1) == pytest.approx(0.01 / math.sqrt(0.07), rel=1e-14)
    assert snr_shot_noise_chi(0.25, 0.04, 1) == pytest.approx(snr_shot_noise(READOUT, 1), rel=1e-14)
    for n in (1, 7, 12345):
        assert snr_shot_noise(READOUT, 4 * n) == 2 * snr_shot_noise(READOUT, n)


def test_larmor_shift_exact():
    assert larmor_shift(0.1e-4) == 426.0
    assert larmor_shift(-0.1e-4) == -426.0


def test_sample_rate_compensation():
    assert sample_rate_compensation(2e6, 426.0, 64e9) == pytest.approx(64e9 * 426.0 / 2e6, rel=1e-15)


def test_depth_field_round_trip_and_scaling():
    b8 = brms_from_depth(8e-9)
    assert 300e-9 < b8 < 600e-9
    assert depth_from_brms(b8) == pytest.approx(8e-9, rel=1e-12)
    assert brms_from_depth(16e-9) == pytest.approx(b8 / 2 ** 1.5, rel=1e-12)


def test_sensor_physics_consistency():
    b = brms_from_depth(8e-9)
    SensorPhysics(depth=8e-9, b_rms=b * 1.005)
    with pytest.raises(ValueError):
        SensorPhysics(depth=8e-9, b_rms=b * 1.1)
    with pytest.raises(ValueError):
        SensorPhysics().field_rms


def test_phi_rms_linear_in_tau():
    p = SensorPhysics(b_rms=1e-7)
    assert phi_rms_from(2e-6, p) == pytest.approx(2 / math.pi * GAMMA_ELECTRON * 1e-7 * 2e-6)


def test_signal_factors():
    p = SensorPhysics(b_rms=4e-7, t2=5e-4)
    tau = 1e-5
    bare = qdyne_signal(tau, SensorPhysics(b_rms=4e-7), READOUT)
    assert qdyne_signal(tau, p, READOUT) == pytest.approx(bare * math.exp(-2 * tau / 5e-4))
    phi = phi_rms_from(tau, p)
    assert bare == pytest.approx(0.01 / 8 * (1 - math.exp(-2 * phi ** 2)))
    assert qdyne_snr_rate(tau, 3.5e-6, p, READOUT) == pytest.approx(qdyne_signal(tau, p, READOUT) / math.sqrt(1.35e-5))


def test_decoherence_free_optimum_phase():
    # maximize (1 - exp(-2 phi^2)) / sqrt(phi): 8 phi^2 exp(-2 phi^2) = 1 - exp(-2 phi^2)
    phi_opt = brentq(lambda x: 8 * x * x * math.exp(-2 * x * x) - (1 - math.exp(-2 * x * x)), 0.3, 3.0)
    p = SensorPhysics(depth=8e-9)
    res = optimize_tau("snr_rate", p, READOUT, tau_o=0.0)
    assert not res.at_boundary
    assert res.phi_rms == pytest.approx(phi_opt, rel=1e-4)
    assert 0.5 <= res.phi_rms <= 1.5


def test_decoherence_shortens_optimal_tau():
    free = optimize_tau("snr_rate", SensorPhysics(depth=8e-9), READOUT, tau_o=3.5e-6)
    real = optimize_tau("snr_rate", SensorPhysics(depth=8e-9, t2=5e-4), READOUT,
                        EnvelopeKind.POWER_LAW, 1e-4, tau_o=3.5e-6)
    assert real.tau_star < free.tau_star
    assert real.phi_rms < free.phi_rms


def test_optimize_boundary_and_callable():
    res = optimize_tau(lambda t: t, bounds=(1e-6, 1e-3))
    assert res.at_boundary and res.tau_star == pytest.approx(1e-3)
    res = optimize_tau(lambda t: -(math.log(t) - math.log(3e-5)) ** 2, bounds=(1e-6, 1e-3))
    assert res.tau_star == pytest.approx(3e-5, rel=1e-4)
    with pytest.raises(ValueError):
        optimize_tau("nope", SensorPhysics(depth=8e-9), READOUT)


def test_readout_window(tmp_path):
    t = np.arange(1, 401) * 1e-9
    # bright state decays into the dark level after ~200 ns
    c1 = 0.02 * np.arange(1, 401)
    c0 = c1 + 3.0 * (1 - np.exp(-np.arange(1, 401) / 100.0))
    res = readout_window_optimize(ReadoutTrace(t, c0, c1))
    snr = (c0 - c1) / np.sqrt(c0 + c1)
    assert res.t_snr == t[np.argmax(snr)]
    assert not res.degenerate
    path = tmp_path / "ro.csv"
    rows = "\n".join(f"{int(round(x * 1e9))},{float(a)!r},{float(b)!r}" for x, a, b in zip(t, c0, c1))
    path.write_text("t_ns,counts0,counts1\n" + rows + "\n")
    again = read_readout_trace(path)
    assert np.allclose(again.time_axis, t, rtol=1e-15) and np.array_equal(again.counts0, c0)


def test_readout_trace_validation():
    with pytest.raises(ValueError):
        ReadoutTrace([1.0, 1.0], [1.0, 2.0], [0.0, 1.0])
    with pytest.warns(RuntimeWarning):
        ReadoutTrace([1.0, 2.0], [1.0, 2.0], [1.5, 1.6])
