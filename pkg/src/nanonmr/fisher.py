"""Fisher information about the frequency offset for CS and Qdyne.

Single-measurement densities (weak signal)::

    i_cs(t) = c^2/(4 eta + c^2)       phi^4 t^2 sin^2(delta t) C^2(t/T_D)
    i_qd(t) = [c^2/(4 eta + c^2)]^2   phi^4 t^2 sin^2(delta t) C^2(t/T_D)

Totals, with ``a = delta T_D`` and ``L = T / T_D``::

    I_cs = f_cs phi^4 T_D T          int_0^1 t^2 sin^2(a t) C^2(t) dt
    I_qd = f_qd phi^4 T_D^4/tau~^2   int_0^L (L - z) z^2 sin^2(a z) C^2(z) dz

Every total is available three ways: adaptive quadrature, the brute-force
measurement sum it approximates, and closed forms (exact for the
exponential envelope, leading-order for the power law).
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc, gammaln

from .envelopes import (CorrelationModel, EnvelopeKind, LARGE_Z, envelope_power_law,
                        power_law_tail_terms)
from .quadrature import QuadratureError, gauss_kronrod
from .special import cin

__all__ = [
    "ReadoutParams",
    "ProtocolTiming",
    "FisherResult",
    "RatioResult",
    "GridAxis",
    "GridSpec",
    "GridCell",
    "fisher_single_cs",
    "fisher_single_qdyne",
    "fisher_total_cs_numeric",
    "fisher_total_qdyne_numeric",
    "fisher_total_cs_sum",
    "fisher_total_qdyne_sum",
    "fisher_total_cs_closed_powerlaw",
    "fisher_total_qdyne_closed_powerlaw",
    "fisher_total_cs_closed_exponential",
    "fisher_total_qdyne_closed_exponential",
    "fisher_cs_small_delta_exponential",
    "fisher_qdyne_small_delta_exponential",
    "ratio_r_delta",
    "rayleigh_resolvable",
    "rayleigh_threshold",
    "grid_map",
    "QuadratureError",
]

_SQRT_PI = math.sqrt(math.pi)
_E2 = math.e ** 2

MAX_SUM_TERMS = 10_000_000
_SUM_CHUNK = 1_000_000
# oscillation half-periods resolved by panels before switching to the analytic tail
_N_OSC_PANELS = 400
# beyond this z the exponential weight z^4 exp(-2z) is below 1e-28
_EXP_CUTOFF = 40.0
_DEFAULT_RTOL = 1e-11

# validation-only envelope with C^2(z) = (4/sqrt(pi)) z^-3, the pure long-time law
TAIL_ONLY = "tail_only"


@dataclass(frozen=True)
class ReadoutParams:
    """Expected photons per readout for the bright (``eta0``) and dark (``eta1``) state."""

    eta0: float
    eta1: float

    def __post_init__(self):
        if not (self.eta0 >= self.eta1 >= 0):
            raise ValueError("readout requires eta0 >= eta1 >= 0")
        if not self.eta0 > 0:
            raise ValueError("eta0 must be positive")

    @classmethod
    def from_contrast(cls, chi: float, eta0: float = 0.04) -> "ReadoutParams":
        """Build from relative contrast ``chi = (eta0 - eta1) / eta0``."""
        if not 0 <= chi <= 1:
            raise ValueError("chi must lie in [0, 1]")
        return cls(eta0, eta0 * (1.0 - chi))

    @property
    def eta(self) -> float:
        return 0.5 * (self.eta0 + self.eta1)

    @property
    def c(self) -> float:
        return self.eta0 - self.eta1

    @property
    def chi(self) -> float:
        return self.c / self.eta0

    @property
    def cs_factor(self) -> float:
        """``c^2 / (4 eta + c^2)``."""
        c2 = self.c ** 2
        return c2 / (4.0 * self.eta + c2)

    @property
    def qdyne_factor(self) -> float:
        return self.cs_factor ** 2


@dataclass(frozen=True)
class ProtocolTiming:
    """Phase acquisition ``tau``, overhead ``tau_o`` and total time ``total_time`` (all s)."""

    tau: float
    tau_o: float
    total_time: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.tau_o >= 0:
            raise ValueError("tau_o must be >= 0")
        if not self.total_time > 0:
            raise ValueError("total_time must be positive")

    @classmethod
    def from_tau_tilde(cls, tau_tilde: float, total_time: float, tau_o: float = 0.0):
        return cls(tau_tilde - tau_o, tau_o, total_time)

    @property
    def tau_tilde(self) -> float:
        return self.tau + self.tau_o

    def with_total_time(self, total_time: float) -> "ProtocolTiming":
        return ProtocolTiming(self.tau, self.tau_o, total_time)


@dataclass(frozen=True)
class FisherResult:
    value: float
    method: str
    abs_error_estimate: float = 0.0

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class RatioResult:
    value: float
    i_cs: float
    i_qd: float
    method: str
    underflow: bool = False

    def __float__(self):
        return float(self.value)


# --------------------------------------------------------------------------
# single-measurement densities

def _c_squared(kind, z):
    if kind == TAIL_ONLY:
        return 4.0 / _SQRT_PI * np.asarray(z, dtype=float) ** -3
    if kind is EnvelopeKind.EXPONENTIAL:
        return np.exp(-2.0 * np.asarray(z, dtype=float))
    return np.asarray(envelope_power_law(z)) ** 2


def _density(model: CorrelationModel, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    out = model.phi_rms ** 4 * t ** 2 * np.sin(model.delta * t) ** 2 * _c_squared(model.kind, t / model.t_d)
    return float(out) if out.ndim == 0 else out


def fisher_single_cs(model: CorrelationModel, readout: ReadoutParams, t):
    """Information about ``delta`` from one CS measurement at correlation time ``t``."""
    return readout.cs_factor * _density(model, t)


def fisher_single_qdyne(model: CorrelationModel, readout: ReadoutParams, t):
    """Information about ``delta`` from one correlated Qdyne pair separated by ``t``."""
    return readout.qdyne_factor * _density(model, t)


# --------------------------------------------------------------------------
# quadrature kernels in normalized time

def _z2c2(kind):
    if kind == TAIL_ONLY:
        return lambda z: 4.0 / _SQRT_PI / z
    if kind is EnvelopeKind.EXPONENTIAL:
        return lambda z: z * z * np.exp(-2.0 * z)
    return lambda z: z * z * np.asarray(envelope_power_law(z)) ** 2


def _tail_terms(kind):
    if kind == TAIL_ONLY:
        return [(4.0 / _SQRT_PI, 1.0)], 0.0
    if kind is EnvelopeKind.EXPONENTIAL:
        return None, _EXP_CUTOFF
    return power_law_tail_terms(), LARGE_Z


def _breakpoints(a: float, upper: float) -> np.ndarray:
    # panels no wider than the half period pi/a of sin^2(a z), plus log-spaced
    # points that resolve the envelope near the origin
    n_osc = int(math.ceil(upper * a / math.pi))
    osc = np.linspace(0.0, upper, n_osc + 1)
    logs = np.geomspace(min(1e-3, upper / 2), upper, 40)
    return np.unique(np.concatenate([osc, logs, [0.0, upper]]))


def _cs_integral(kind, a: float, rtol: float):
    f = _z2c2(kind)
    integrand = lambda z: f(z) * np.sin(a * z) ** 2  # noqa: E731
    r = gauss_kronrod(integrand, _breakpoints(a, 1.0), rtol=rtol)
    return r.value, r.abs_error


def _int_power(p: float, lo: float, hi: float) -> float:
    # int_lo^hi z^-p dz
    if p == 1.0:
        return math.log(hi / lo)
    return (hi ** (1.0 - p) - lo ** (1.0 - p)) / (1.0 - p)


def _osc_antiderivative(L: float, p: float, omega: float, z: float, n_max: int = 80):
    """Repeated integration by parts of ``(L z^-p - z^(1-p)) cos(omega z)``.

    Returns the antiderivative at ``z`` and the magnitude of the last term kept.
    """
    total = 0.0
    r1 = 1.0  # rising factorial (p)_n
    r2 = 1.0  # rising factorial (p - 1)_n
    last = 0.0
    for n in range(n_max):
        g_n = (-1) ** n * (L * r1 * z ** (-p - n) - r2 * z ** (1.0 - p - n))
        term = g_n * math.sin(omega * z + n * math.pi / 2) / omega ** (n + 1)
        total += term
        last = abs(g_n) / omega ** (n + 1)
        if last <= 1e-18 * max(abs(total), 1e-300) and n > 1:
            break
        r1 *= p + n
        r2 *= p - 1.0 + n
    return total, last


def _qdyne_tail(terms, a: float, L: float, Z: float):
    """``int_Z^L (L - z) sum q z^-p sin^2(a z) dz`` analytically."""
    omega = 2.0 * a
    smooth = 0.0
    osc = 0.0
    err = 0.0
    for q, p in terms:
        smooth += q * (L * _int_power(p, Z, L) - _int_power(p - 1.0, Z, L))
        f_hi, e_hi = _osc_antiderivative(L, p, omega, L)
        f_lo, e_lo = _osc_antiderivative(L, p, omega, Z)
        osc += q * (f_hi - f_lo)
        err += abs(q) * (e_hi + e_lo)
    return 0.5 * (smooth - osc), 0.5 * err


def _qdyne_integral(kind, a: float, L: float, rtol: float):
    f = _z2c2(kind)
    terms, z_min = _tail_terms(kind)
    if terms is None:
        upper = min(L, z_min)
    else:
        upper = min(L, max(z_min, _N_OSC_PANELS * math.pi / a))
    integrand = lambda z: (L - z) * f(z) * np.sin(a * z) ** 2  # noqa: E731
    r = gauss_kronrod(integrand, _breakpoints(a, upper), rtol=rtol)
    value, err = r.value, r.abs_error
    if terms is not None and upper < L:
        tail, tail_err = _qdyne_tail(terms, a, L, upper)
        value += tail
        err += tail_err + 1e-15 * abs(tail)
    return value, err


def _resolve_kind(model: CorrelationModel, envelope_override):
    if envelope_override is None:
        return model.kind
    if envelope_override == TAIL_ONLY:
        return TAIL_ONLY
    return EnvelopeKind.parse(envelope_override)


def _cs_prefactor(model, readout, timing):
    return readout.cs_factor * model.phi_rms ** 4 * model.t_d * timing.total_time


def _qd_prefactor(model, readout, timing):
    return readout.qdyne_factor * model.phi_rms ** 4 * model.t_d ** 4 / timing.tau_tilde ** 2


def fisher_total_cs_numeric(model: CorrelationModel, readout: ReadoutParams,
                            timing: ProtocolTiming, *, rtol: float = _DEFAULT_RTOL,
                            envelope_override=None) -> FisherResult:
    """Total CS information by adaptive quadrature.

    ``envelope_override`` replaces the model envelope for validation; the
    string ``"tail_only"`` selects the pure long-time law.
    """
    if timing.total_time < 10 * model.t_d:
        warnings.warn("CS continuum limit assumes total_time >> t_d", RuntimeWarning, stacklevel=2)
    if model.delta == 0 or model.phi_rms == 0 or readout.c == 0:
        return FisherResult(0.0, "quadrature", 0.0)
    kind = _resolve_kind(model, envelope_override)
    pref = _cs_prefactor(model, readout, timing)
    value, err = _cs_integral(kind, model.delta * model.t_d, rtol)
    return FisherResult(pref * value, "quadrature", pref * err)


def fisher_total_qdyne_numeric(model: CorrelationModel, readout: ReadoutParams,
                               timing: ProtocolTiming, *, rtol: float = _DEFAULT_RTOL,
                               envelope_override=None) -> FisherResult:
    """Total Qdyne information over all correlated pairs, by adaptive quadrature.

    Panels never exceed one half period of ``sin^2``; past a few hundred half
    periods (and once the envelope's tail series has converged) the remainder
    is integrated analytically.
    """
    if timing.tau_tilde >= model.t_d:
        warnings.warn("Qdyne continuum limit assumes tau_tilde < t_d", RuntimeWarning, stacklevel=2)
    if model.delta == 0 or model.phi_rms == 0 or readout.c == 0:
        return FisherResult(0.0, "quadrature", 0.0)
    kind = _resolve_kind(model, envelope_override)
    pref = _qd_prefactor(model, readout, timing)
    L = timing.total_time / model.t_d
    value, err = _qdyne_integral(kind, model.delta * model.t_d, L, rtol)
    return FisherResult(pref * value, "quadrature", pref * err)


# --------------------------------------------------------------------------
# brute-force measurement sums

def _chunked_sum(n_last: int, term):
    total = math.fsum(
        float(np.sum(term(np.arange(start, min(start + _SUM_CHUNK, n_last + 1), dtype=float))))
        for start in range(0, n_last + 1, _SUM_CHUNK))
    return total


def fisher_total_cs_sum(model: CorrelationModel, readout: ReadoutParams,
                        timing: ProtocolTiming, *, envelope_override=None) -> FisherResult:
    """CS information as an explicit sum over ``M = T / T_D`` measurements.

    Measurement ``j`` probes the correlation at ``t_j = (j / M) T_D``, which
    is the Riemann sum whose continuum limit is :func:`fisher_total_cs_numeric`.
    """
    n_meas = timing.total_time / model.t_d
    m = int(round(n_meas))
    if m > MAX_SUM_TERMS:
        raise ValueError(f"sum would need {m} terms (limit {MAX_SUM_TERMS})")
    if m < 1 or model.delta == 0:
        return FisherResult(0.0, "riemann_sum", 0.0)
    kind = _resolve_kind(model, envelope_override)
    a = model.delta * model.t_d
    f = _z2c2(kind)

    def term(j):
        u = j / m
        with np.errstate(divide="ignore", invalid="ignore"):
            val = f(u) * np.sin(a * u) ** 2
        return np.where(u > 0, val, 0.0)

    total = _chunked_sum(m, term)
    # sum_j t_j^2 sin^2 C^2 with t_j = u_j T_D
    value = readout.cs_factor * model.phi_rms ** 4 * model.t_d ** 2 * total * (n_meas / m)
    return FisherResult(value, "riemann_sum", 0.0)


def fisher_total_qdyne_sum(model: CorrelationModel, readout: ReadoutParams,
                           timing: ProtocolTiming, *, envelope_override=None) -> FisherResult:
    """Qdyne information summed over pair separations ``j tau~`` with pair count ``T/tau~ - j``."""
    n_float = timing.total_time / timing.tau_tilde
    n_last = int(math.floor(n_float))
    if n_last + 1 > MAX_SUM_TERMS:
        raise ValueError(f"sum would need {n_last + 1} terms (limit {MAX_SUM_TERMS})")
    if n_last < 1 or model.delta == 0:
        return FisherResult(0.0, "riemann_sum", 0.0)
    kind = _resolve_kind(model, envelope_override)
    a = model.delta * model.t_d
    h = timing.tau_tilde / model.t_d
    f = _z2c2(kind)

    def term(j):
        z = j * h
        with np.errstate(divide="ignore", invalid="ignore"):
            val = (n_float - j) * f(z) * np.sin(a * z) ** 2
        return np.where(z > 0, val, 0.0)

    total = _chunked_sum(n_last, term)
    # (j tau~)^2 C^2 = T_D^2 z^2 C^2(z)
    value = readout.qdyne_factor * model.phi_rms ** 4 * model.t_d ** 2 * total
    return FisherResult(value, "riemann_sum", 0.0)


# --------------------------------------------------------------------------
# closed forms

def fisher_total_cs_closed_powerlaw(model: CorrelationModel, readout: ReadoutParams,
                                    timing: ProtocolTiming, small_delta: bool = False) -> FisherResult:
    """Long-time-law CS information ``(2/sqrt(pi)) f phi^4 T_D T (gamma - Ci(2a) + ln 2a)``.

    ``small_delta`` returns its leading term ``(2/sqrt(pi)) f phi^4 T_D^3 T delta^2``.
    """
    pref = 2.0 / _SQRT_PI * _cs_prefactor(model, readout, timing)
    a = model.delta * model.t_d
    if small_delta:
        return FisherResult(pref * a * a, "closed_form", 0.0)
    if not a > 0:
        raise ValueError("full closed form needs delta > 0")
    # gamma + ln(2a) - Ci(2a) evaluated without cancellation
    return FisherResult(pref * cin(2.0 * a), "closed_form", 0.0)


def fisher_total_qdyne_closed_powerlaw(model: CorrelationModel, readout: ReadoutParams,
                                       timing: ProtocolTiming) -> FisherResult:
    """Leading-order Qdyne information ``(2/sqrt(pi)) f^2 phi^4 T_D^3 T ln(delta T) / tau~^2``."""
    dT = model.delta * timing.total_time
    if not dT > 1:
        raise ValueError("closed form requires delta * T > 1")
    if model.delta * model.t_d >= 1:
        warnings.warn("closed form assumes delta * t_d < 1", RuntimeWarning, stacklevel=2)
    pref = _qd_prefactor(model, readout, timing)  # includes T_D^4 / tau~^2
    value = 2.0 / _SQRT_PI * pref / model.t_d * timing.total_time * math.log(dT)
    return FisherResult(value, "closed_form", 0.0)


def _sin2_series_coeffs(n_terms: int):
    # sin^2(u) = sum_{k>=1} (-1)^(k+1) 2^(2k-1) u^(2k) / (2k)!
    return [(k, (-1) ** (k + 1) * math.exp((2 * k - 1) * math.log(2.0) - gammaln(2 * k + 1)))
            for k in range(1, n_terms + 1)]


def _exp_moment(n: int, upper: float) -> float:
    # int_0^upper z^n exp(-2z) dz
    return math.exp(gammaln(n + 1) - (n + 1) * math.log(2.0)) * float(gammainc(n + 1, 2.0 * upper))


def _cs_exp_integral(a: float) -> float:
    """``int_0^1 t^2 sin^2(a t) exp(-2t) dt``."""
    if a < 1e-3:
        return sum(s * a ** (2 * k) * _exp_moment(2 * k + 2, 1.0) for k, s in _sin2_series_coeffs(8))
    a2 = a * a
    bracket = ((_E2 - 5.0) * (a2 ** 3 + 3.0 * a2 ** 2) + (6.0 * _E2 - 15.0) * a2
               + (a2 + 5.0) * math.cos(2 * a)
               - a * (2.0 * a2 ** 2 + 7.0 * a2 + 9.0) * math.sin(2 * a) - 5.0)
    return bracket / (8.0 * _E2 * (a2 + 1.0) ** 3)


def _qdyne_exp_integral(a: float, L: float) -> float:
    """``int_0^L (L - z) z^2 sin^2(a z) exp(-2z) dz``.

    The ``exp(2L)`` growth inside the bracket multiplies only the
    non-oscillating part, so it is cancelled against the ``exp(-2L)``
    prefactor analytically.
    """
    if a * min(L, _EXP_CUTOFF) < 1e-3:
        return sum(s * a ** (2 * k) * (L * _exp_moment(2 * k + 2, L) - _exp_moment(2 * k + 3, L))
                   for k, s in _sin2_series_coeffs(8))
    a2 = a * a
    s2 = math.sin(2 * a * L)
    c2 = math.cos(2 * a * L)
    u = a2 * L + L
    A = (2 * L * L + 4 * L + 3) * (a2 + 1) ** 4
    B = 4 * a * s2 * (u * u + L * (-a2 * a2 + 2 * a2 + 3) - 3 * a2 + 3)
    C = c2 * (2 * (a2 - 1) * u * u + 4 * L * (3 * a2 * a2 + 2 * a2 - 1) - 3 * (a2 * a2 - 6 * a2 + 1))
    D = a2 * (a2 ** 3 * (2 * L - 3) + 4 * a2 * a2 * (2 * L - 3) + 3 * a2 * (6 * L - 5) + 12 * L - 30)
    decay = math.exp(-2.0 * L) if L < 370 else 0.0
    return (decay * (A + B + C) + D) / (16.0 * (a2 + 1) ** 4)


def _require_exponential(model):
    if model.kind is not EnvelopeKind.EXPONENTIAL:
        raise ValueError("exponential closed form requires an exponential envelope")


def fisher_total_cs_closed_exponential(model: CorrelationModel, readout: ReadoutParams,
                                       timing: ProtocolTiming) -> FisherResult:
    """Exact CS information for ``C^2(z) = exp(-2z)``."""
    _require_exponential(model)
    value = _cs_prefactor(model, readout, timing) * _cs_exp_integral(model.delta * model.t_d)
    return FisherResult(value, "closed_form", 0.0)


def fisher_total_qdyne_closed_exponential(model: CorrelationModel, readout: ReadoutParams,
                                          timing: ProtocolTiming) -> FisherResult:
    """Exact Qdyne information for ``C^2(z) = exp(-2z)``."""
    _require_exponential(model)
    L = timing.total_time / model.t_d
    value = _qd_prefactor(model, readout, timing) * _qdyne_exp_integral(model.delta * model.t_d, L)
    return FisherResult(value, "closed_form", 0.0)


def fisher_cs_small_delta_exponential(model, readout, timing) -> FisherResult:
    """``3 (e^2 - 7) / (4 e^2) f phi^4 delta^2 T_D^3 T``."""
    a = model.delta * model.t_d
    value = 3.0 * (_E2 - 7.0) / (4.0 * _E2) * _cs_prefactor(model, readout, timing) * a * a
    return FisherResult(value, "closed_form", 0.0)


def fisher_qdyne_small_delta_exponential(model, readout, timing) -> FisherResult:
    """``(3/4) f^2 phi^4 T_D^5 delta^2 T / tau~^2``."""
    value = (0.75 * readout.qdyne_factor * model.phi_rms ** 4 * model.t_d ** 5
             * model.delta ** 2 * timing.total_time / timing.tau_tilde ** 2)
    return FisherResult(value, "closed_form", 0.0)


# --------------------------------------------------------------------------
# comparison

_CS_METHODS = {
    "quadrature": fisher_total_cs_numeric,
    "sum": fisher_total_cs_sum,
}
_QD_METHODS = {
    "quadrature": fisher_total_qdyne_numeric,
    "sum": fisher_total_qdyne_sum,
}


def _closed(model, readout, timing, protocol):
    if model.kind is EnvelopeKind.EXPONENTIAL:
        fn = fisher_total_cs_closed_exponential if protocol == "cs" else fisher_total_qdyne_closed_exponential
        return fn(model, readout, timing)
    if protocol == "cs":
        return fisher_total_cs_closed_powerlaw(model, readout, timing)
    return fisher_total_qdyne_closed_powerlaw(model, readout, timing)


def ratio_r_delta(model: CorrelationModel, readout_cs: ReadoutParams, readout_qd: ReadoutParams,
                  timing_cs: ProtocolTiming, timing_qd: ProtocolTiming,
                  method: str = "quadrature") -> RatioResult:
    """``R = I_qd / I_cs``.

    ``method`` is ``"quadrature"``, ``"sum"``, ``"closed"`` or ``"approx"``
    (the leading-order ratio ``f ln(delta T) / (delta tau~)^2``, generalized
    to unequal readouts and durations).  When ``I_cs`` is zero or underflows
    the value is ``+inf`` and ``underflow`` is set.
    """
    if method == "approx":
        d = model.delta
        if not d * timing_qd.total_time > 1:
            raise ValueError("approximate ratio requires delta * T > 1")
        value = (readout_qd.qdyne_factor / readout_cs.cs_factor
                 * timing_qd.total_time / timing_cs.total_time
                 * math.log(d * timing_qd.total_time) / (d * timing_qd.tau_tilde) ** 2)
        return RatioResult(value, math.nan, math.nan, method)
    if method == "closed":
        i_cs = _closed(model, readout_cs, timing_cs, "cs").value
        i_qd = _closed(model, readout_qd, timing_qd, "qd").value
    elif method in _CS_METHODS:
        i_cs = _CS_METHODS[method](model, readout_cs, timing_cs).value
        i_qd = _QD_METHODS[method](model, readout_qd, timing_qd).value
    else:
        raise ValueError(f"unknown method {method!r}")
    if not i_cs > np.finfo(float).tiny:
        return RatioResult(math.inf, i_cs, i_qd, method, underflow=True)
    return RatioResult(i_qd / i_cs, i_cs, i_qd, method)


def rayleigh_threshold(delta: float) -> float:
    """Information needed to resolve ``delta``: ``4 / delta^2``."""
    return 4.0 / delta ** 2


def rayleigh_resolvable(info: float, delta: float) -> bool:
    """True when ``1 / info < delta^2 / 4``."""
    if info < 0:
        raise ValueError("information must be >= 0")
    if not delta > 0:
        raise ValueError("delta must be positive")
    return bool(info > rayleigh_threshold(delta))


# --------------------------------------------------------------------------
# parameter maps

GRID_PARAMETERS = ("f_delta", "f_delta_td", "t_d", "tau_tilde", "tau_o", "chi", "eta0",
                   "total_time", "phi_rms")


@dataclass(frozen=True)
class GridAxis:
    name: str
    values: tuple

    def __post_init__(self):
        if self.name not in GRID_PARAMETERS:
            raise ValueError(f"unknown grid parameter {self.name!r}; choose from {GRID_PARAMETERS}")
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 1:
            raise ValueError("axis needs at least one point")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError(f"axis {self.name} must be strictly increasing")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class GridSpec:
    """Two swept axes plus fixed values for the remaining parameters.

    Frequencies are ordinary (Hz): ``f_delta = delta / 2 pi``; ``f_delta_td``
    fixes the product ``(delta / 2 pi) T_D`` instead.  All times in seconds.
    """

    x: GridAxis
    y: GridAxis
    fixed: dict = field(default_factory=dict)
    kind: EnvelopeKind = EnvelopeKind.POWER_LAW

    def __post_init__(self):
        if self.x.name == self.y.name:
            raise ValueError("grid axes must differ")
        object.__setattr__(self, "kind", EnvelopeKind.parse(self.kind))
        for key in self.fixed:
            if key not in GRID_PARAMETERS:
                raise ValueError(f"unknown fixed parameter {key!r}")


@dataclass(frozen=True)
class GridCell:
    x: float
    y: float
    r_delta: float
    i_cs: float
    i_qd: float
    err_cs: float
    err_qd: float
    resolvable_cs: bool
    resolvable_qd: bool
    flag: str = ""


_GRID_DEFAULTS = {"phi_rms": 1.0, "eta0": 0.04, "chi": 0.25, "tau_o": 0.0}


def _cell_inputs(params: dict, kind):
    p = {**_GRID_DEFAULTS, **params}
    missing = [k for k in ("t_d", "tau_tilde", "total_time") if k not in p]
    if missing:
        raise ValueError(f"grid needs values for {missing}")
    if "f_delta" in p and "f_delta_td" in p:
        raise ValueError("give either f_delta or f_delta_td, not both")
    if "f_delta" in p:
        delta = 2 * math.pi * p["f_delta"]
    elif "f_delta_td" in p:
        delta = 2 * math.pi * p["f_delta_td"] / p["t_d"]
    else:
        raise ValueError("grid needs f_delta or f_delta_td")
    model = CorrelationModel(p["phi_rms"], delta, p["t_d"], kind)
    readout = ReadoutParams.from_contrast(p["chi"], p["eta0"])
    timing = ProtocolTiming.from_tau_tilde(p["tau_tilde"], p["total_time"], p["tau_o"])
    return model, readout, timing


def _grid_cell(spec: GridSpec, x: float, y: float) -> GridCell:
    params = {**spec.fixed, spec.x.name: x, spec.y.name: y}
    try:
        model, readout, timing = _cell_inputs(params, spec.kind)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            cs = fisher_total_cs_numeric(model, readout, timing)
            qd = fisher_total_qdyne_numeric(model, readout, timing)
    except (ArithmeticError, ValueError) as exc:
        nan = math.nan
        return GridCell(x, y, nan, nan, nan, nan, nan, False, False, flag=f"{type(exc).__name__}: {exc}")
    flag = ""
    if cs.value > np.finfo(float).tiny:
        r = qd.value / cs.value
    else:
        r, flag = math.inf, "cs_underflow"
    delta = model.delta
    return GridCell(x, y, r, cs.value, qd.value, cs.abs_error_estimate, qd.abs_error_estimate,
                    rayleigh_resolvable(cs.value, delta) if delta > 0 else False,
                    rayleigh_resolvable(qd.value, delta) if delta > 0 else False, flag)


def grid_map(spec: GridSpec, workers: int = 1) -> list:
    """Evaluate ``R_delta`` and resolvability on the ``x`` by ``y`` grid.

    Cells are returned row-major (``y`` outer, ``x`` inner) regardless of
    ``workers``; numeric failures become flagged cells instead of aborting.
    """
    coords = [(x, y) for y in spec.y.values for x in spec.x.values]
    if workers <= 1:
        return [_grid_cell(spec, x, y) for x, y in coords]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda xy: _grid_cell(spec, *xy), coords))
