import math
import warnings

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nanonmr.envelopes import CorrelationModel
from nanonmr.fisher import (TAIL_ONLY, GridAxis, GridSpec, ProtocolTiming, ReadoutParams,
                            fisher_cs_small_delta_exponential, fisher_qdyne_small_delta_exponential,
                            fisher_single_cs, fisher_single_qdyne, fisher_total_cs_closed_exponential,
                            fisher_total_cs_closed_powerlaw, fisher_total_cs_numeric, fisher_total_cs_sum,
                            fisher_total_qdyne_closed_exponential, fisher_total_qdyne_closed_powerlaw,
                            fisher_total_qdyne_numeric, fisher_total_qdyne_sum, grid_map, ratio_r_delta,
                            rayleigh_resolvable, rayleigh_threshold)

READOUT = ReadoutParams(0.04, 0.03)


def _setup(kind, a, L, t_d=1e-4, tau_tilde=25e-6, phi=1.0):
    model = CorrelationModel(phi, a / t_d, t_d, kind)
    return model, ProtocolTiming.from_tau_tilde(tau_tilde, L * t_d)


def _mp_exp_integrals(a, L):
    with mp.workdps(30):
        a, L = mp.mpf(a), mp.mpf(L)
        cs = mp.quad(lambda t: t ** 2 * mp.sin(a * t) ** 2 * mp.exp(-2 * t), [0, 1])
        upper = min(L, 60)
        pts = mp.linspace(0, upper, int(a * upper) + 2)
        qd = mp.quad(lambda z: (L - z) * z ** 2 * mp.sin(a * z) ** 2 * mp.exp(-2 * z), pts)
    return float(cs), float(qd)


def test_readout_factors():
    assert READOUT.eta == pytest.approx(0.035)
    assert READOUT.c == pytest.approx(0.01)
    assert READOUT.cs_factor == pytest.approx(1e-4 / (0.14 + 1e-4))
    assert READOUT.qdyne_factor == pytest.approx(READOUT.cs_factor ** 2)
    assert ReadoutParams.from_contrast(0.25, 0.04).eta1 == pytest.approx(0.03)
    with pytest.raises(ValueError):
        ReadoutParams(0.01, 0.02)


@pytest.mark.parametrize("a,L", [(0.0005, 20.0), (0.05, 100.0), (0.7, 30.0), (3.0, 1000.0)])
def test_exponential_closed_forms_match_mpmath(a, L):
    model, timing = _setup("exp", a, L)
    cs_ref, qd_ref = _mp_exp_integrals(a, L)
    pref_cs = READOUT.cs_factor * model.t_d * timing.total_time
    pref_qd = READOUT.qdyne_factor * model.t_d ** 4 / timing.tau_tilde ** 2
    assert fisher_total_cs_closed_exponential(model, READOUT, timing).value == pytest.approx(pref_cs * cs_ref, rel=1e-12)
    assert fisher_total_qdyne_closed_exponential(model, READOUT, timing).value == pytest.approx(pref_qd * qd_ref, rel=1e-12)


@pytest.mark.parametrize("a,L", [(0.01, 10.0), (0.4, 300.0), (3.0, 1000.0)])
def test_exponential_quadrature_matches_closed(a, L):
    model, timing = _setup("exp", a, L)
    for num, closed in ((fisher_total_cs_numeric, fisher_total_cs_closed_exponential),
                        (fisher_total_qdyne_numeric, fisher_total_qdyne_closed_exponential)):
        assert num(model, READOUT, timing).value == pytest.approx(closed(model, READOUT, timing).value, rel=1e-9)


def test_tail_only_quadrature_equals_cosine_integral_form():
    model, timing = _setup("power_law", 0.3, 1e3)
    num = fisher_total_cs_numeric(model, READOUT, timing, envelope_override=TAIL_ONLY).value
    assert num == pytest.approx(fisher_total_cs_closed_powerlaw(model, READOUT, timing).value, rel=1e-10)


def test_qdyne_sum_is_pair_count_weighted_single_information():
    model, timing = _setup("power_law", 0.5, 40.0, tau_tilde=2e-5)
    n = timing.total_time / timing.tau_tilde
    j = np.arange(1, int(n))
    naive = math.fsum((n - j) * fisher_single_qdyne(model, READOUT, j * timing.tau_tilde))
    assert fisher_total_qdyne_sum(model, READOUT, timing).value == pytest.approx(naive, rel=1e-12)


def test_cs_sum_is_sum_of_single_information():
    model, timing = _setup("exp", 1.5, 500.0)
    m = 500
    t = np.arange(1, m + 1) / m * model.t_d
    naive = math.fsum(fisher_single_cs(model, READOUT, t))
    assert fisher_total_cs_sum(model, READOUT, timing).value == pytest.approx(naive, rel=1e-12)


@pytest.mark.parametrize("kind", ["power_law", "exp"])
def test_sums_converge_to_quadrature(kind):
    model, timing = _setup(kind, 0.8, 1e4, tau_tilde=1e-5)
    for s, q in ((fisher_total_cs_sum, fisher_total_cs_numeric),
                 (fisher_total_qdyne_sum, fisher_total_qdyne_numeric)):
        assert s(model, READOUT, timing).value == pytest.approx(q(model, READOUT, timing).value, rel=1e-2)


def test_power_law_small_delta_forms():
    model, timing = _setup("power_law", 0.05, 1e5)
    assert model.delta * timing.total_time >= 1e3
    q = fisher_total_qdyne_numeric(model, READOUT, timing, envelope_override=TAIL_ONLY).value
    assert fisher_total_qdyne_closed_powerlaw(model, READOUT, timing).value == pytest.approx(q, rel=0.2)
    cs_small = fisher_total_cs_closed_powerlaw(model, READOUT, timing, small_delta=True).value
    cs_full = fisher_total_cs_closed_powerlaw(model, READOUT, timing).value
    assert cs_small == pytest.approx(cs_full, rel=1e-2)


def test_exponential_small_delta_forms():
    model, timing = _setup("exp", 1e-3, 200.0)
    assert fisher_cs_small_delta_exponential(model, READOUT, timing).value == pytest.approx(
        fisher_total_cs_closed_exponential(model, READOUT, timing).value, rel=1e-5)
    assert fisher_qdyne_small_delta_exponential(model, READOUT, timing).value == pytest.approx(
        fisher_total_qdyne_closed_exponential(model, READOUT, timing).value, rel=2e-2)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(0.1, 2.0), st.floats(1e-6, 5e-5))
def test_scaling_laws(a, phi, tau_tilde):
    model, timing = _setup("exp", a, 50.0, tau_tilde=tau_tilde, phi=phi)
    base, _ = _setup("exp", a, 50.0, tau_tilde=tau_tilde, phi=1.0)
    qd = fisher_total_qdyne_closed_exponential(model, READOUT, timing).value
    qd1 = fisher_total_qdyne_closed_exponential(base, READOUT, timing).value
    assert qd == pytest.approx(phi ** 4 * qd1, rel=1e-12)
    half = ProtocolTiming.from_tau_tilde(tau_tilde / 2, timing.total_time)
    assert fisher_total_qdyne_closed_exponential(model, READOUT, half).value == pytest.approx(4 * qd, rel=1e-12)


def test_zero_signal_gives_zero_information():
    model = CorrelationModel(1.0, 0.0, 1e-4)
    timing = ProtocolTiming.from_tau_tilde(25e-6, 1.0)
    assert fisher_total_cs_numeric(model, READOUT, timing).value == 0.0
    assert fisher_total_qdyne_numeric(model, ReadoutParams(0.04, 0.04), timing).value == 0.0


def test_ratio_methods_agree_for_exponential():
    model, timing = _setup("exp", 0.5, 200.0)
    q = ratio_r_delta(model, READOUT, READOUT, timing, timing, "quadrature")
    c = ratio_r_delta(model, READOUT, READOUT, timing, timing, "closed")
    assert q.value == pytest.approx(c.value, rel=1e-9)
    assert q.value == pytest.approx(q.i_qd / q.i_cs)


def test_rayleigh():
    assert rayleigh_threshold(2.0) == 1.0
    assert rayleigh_resolvable(1.01, 2.0)
    assert not rayleigh_resolvable(0.99, 2.0)
    with pytest.raises(ValueError):
        rayleigh_resolvable(1.0, 0.0)


def _grid_spec():
    return GridSpec(GridAxis("t_d", (5e-5, 1e-4, 2e-4)), GridAxis("tau_tilde", (1e-5, 2.5e-5)),
                    {"f_delta_td": 1.0, "chi": 0.25, "tau_o": 2.1e-6, "total_time": 3600.0},
                    "power_law")


def test_grid_single_cell_equals_direct_calls():
    spec = GridSpec(GridAxis("t_d", (1e-4,)), GridAxis("tau_tilde", (2.5e-5,)),
                    {"f_delta": 1e3, "total_time": 100.0})
    (cell,) = grid_map(spec)
    model = CorrelationModel(1.0, 2 * math.pi * 1e3, 1e-4)
    readout = ReadoutParams.from_contrast(0.25, 0.04)
    timing = ProtocolTiming.from_tau_tilde(2.5e-5, 100.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert cell.i_cs == fisher_total_cs_numeric(model, readout, timing).value
        assert cell.i_qd == fisher_total_qdyne_numeric(model, readout, timing).value


def test_grid_deterministic_and_worker_independent():
    a = grid_map(_grid_spec(), workers=1)
    b = grid_map(_grid_spec(), workers=3)
    assert a == b
    assert [(c.x, c.y) for c in a][:3] == [(5e-5, 1e-5), (1e-4, 1e-5), (2e-4, 1e-5)]


def test_grid_flags_bad_cells():
    spec = GridSpec(GridAxis("chi", (0.25, 2.0)), GridAxis("t_d", (1e-4,)),
                    {"f_delta": 1e3, "tau_tilde": 2.5e-5, "total_time": 10.0})
    good, bad = grid_map(spec)
    assert good.flag == ""
    assert bad.flag and math.isnan(bad.r_delta)


def test_grid_validation():
    with pytest.raises(ValueError):
        GridAxis("t_d", (2.0, 1.0))
    with pytest.raises(ValueError):
        GridAxis("nonsense", (1.0, 2.0))
