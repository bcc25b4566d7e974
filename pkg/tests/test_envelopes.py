import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nanonmr.envelopes import (LARGE_Z, SMALL_Z, TAIL_CONSTANT, CorrelationModel, EnvelopeKind,
                               NuisanceDecay, covariance, envelope, envelope_exponential,
                               envelope_power_law, power_law_tail_terms)

from _oracles import power_law_envelope_mp


@pytest.mark.parametrize("z", [1e-4, 3e-3, 0.0199, 0.02, 0.05, 0.3, 1.0, 2.5, 7.0, 19.99, 20.0, 20.01,
                               55.0, 300.0, 1e4])
def test_power_law_matches_high_precision(z):
    ref = float(power_law_envelope_mp(z))
    assert envelope_power_law(z) == pytest.approx(ref, rel=1e-10)


def test_power_law_limits():
    assert envelope_power_law(0.0) == 1.0
    assert envelope_power_law(np.inf) == 0.0
    assert envelope_power_law(1e-12) == pytest.approx(1.0, abs=1e-5)


def test_branch_continuity():
    for edge in (SMALL_Z, LARGE_Z):
        lo, hi = envelope_power_law(np.array([edge * (1 - 1e-12), edge * (1 + 1e-12)]))
        assert hi == pytest.approx(lo, rel=1e-10)


def test_tail_constant_against_oracle():
    z = 1e8
    assert envelope_power_law(z) * z ** 1.5 == pytest.approx(TAIL_CONSTANT, rel=1e-3)
    assert float(power_law_envelope_mp(z, 80)) * z ** 1.5 == pytest.approx(TAIL_CONSTANT, rel=1e-3)


def test_tail_terms_reproduce_square():
    z = np.array([25.0, 100.0, 1e3])
    series = sum(q * z ** -p for q, p in power_law_tail_terms())
    assert np.allclose(series, z ** 2 * envelope_power_law(z) ** 2, rtol=1e-13)


def test_array_shape_preserved():
    z = np.linspace(0, 50, 12).reshape(3, 4)
    assert envelope_power_law(z).shape == (3, 4)


@pytest.mark.parametrize("bad", [-1.0, np.nan])
def test_invalid_argument(bad):
    with pytest.raises(ValueError):
        envelope_power_law(bad)
    with pytest.raises(ValueError):
        envelope_exponential(bad)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1e5), st.floats(1e-6, 1e5))
def test_power_law_monotone_and_bounded(z, dz):
    a, b = envelope_power_law(z), envelope_power_law(z + dz)
    assert 0.0 < b <= a <= 1.0 or (b == 0.0 == a)


def test_exponential():
    assert envelope("exp", 1.0) == pytest.approx(math.exp(-1))
    assert envelope(EnvelopeKind.EXPONENTIAL, 0.0) == 1.0


def test_kind_parsing():
    assert EnvelopeKind.parse("power-law") is EnvelopeKind.POWER_LAW
    with pytest.raises(ValueError):
        EnvelopeKind.parse("gaussian")


def test_covariance_law():
    m = CorrelationModel(0.7, 2 * math.pi * 1e3, 1e-4, "exp")
    t = np.array([0.0, 1e-4, 3e-4])
    expected = 0.49 * np.cos(m.delta * t) * np.exp(-t / 1e-4)
    assert np.allclose(covariance(m, t), expected, rtol=1e-14)
    assert covariance(m, np.inf) == 0.0


def test_covariance_with_nuisance():
    nu = NuisanceDecay(0.1, 2e-4, 0.01)
    m = CorrelationModel(1.0, 0.0, 1e-4, "exp", nu)
    assert covariance(m, 2e-4) == pytest.approx(math.exp(-2) + 0.1 * math.exp(-1) + 0.01)


def test_model_validation():
    with pytest.raises(ValueError):
        CorrelationModel(1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        CorrelationModel(-1.0, 1.0, 1.0)
