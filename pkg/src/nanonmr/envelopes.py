"""Correlation envelopes and the phase covariance model.

The diffusion envelope

    C(z) = 4/sqrt(pi) * ( z^-3/2 - 3/2 z^-1/2 + sqrt(pi)/4 + 3 sqrt(z) - 3 sqrt(pi)/2 z
           + sqrt(pi/z) erfc(z^-1/2) exp(1/z) (-z^-3/2 + z^-1/2 - 7/4 sqrt(z) + 3/2 z^3/2) )

cancels catastrophically at both ends of its domain, so it is evaluated in
three regimes:

* ``z < SMALL_Z``: expansion in half-integer powers of ``z`` obtained from the
  asymptotic series of ``sqrt(pi) x erfcx(x)`` at ``x = z^-1/2``;
* ``SMALL_Z <= z <= LARGE_Z``: the closed form with the scaled complementary
  error function ``erfcx``;
* ``z > LARGE_Z``: convergent power series in ``x = z^-1/2`` obtained from
  ``erfcx(x) = sum_n (-x)^n / Gamma(n/2 + 1)``.

The series coefficients are generated once at import from these two exact
expansions (the terms of order below the leading one cancel identically).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import erfcx

__all__ = [
    "EnvelopeKind",
    "NuisanceDecay",
    "CorrelationModel",
    "envelope_power_law",
    "envelope_exponential",
    "envelope",
    "covariance",
    "TAIL_CONSTANT",
    "SMALL_Z",
    "LARGE_Z",
    "power_law_tail_terms",
]

_SQRT_PI = math.sqrt(math.pi)
_PREF = 4.0 / _SQRT_PI

SMALL_Z = 0.02
LARGE_Z = 20.0
_N_SMALL = 20  # highest m in the z^(m - 3/2) series; truncation error < 1e-14 at SMALL_Z
_N_LARGE = 40  # highest k in the x^k series; converged to eps for z >= LARGE_Z

#: limit of C(z) z^(3/2) as z -> infinity, 32 / (15 sqrt(pi))
TAIL_CONSTANT = 32.0 / (15.0 * _SQRT_PI)


class EnvelopeKind(enum.Enum):
    POWER_LAW = "power_law"
    EXPONENTIAL = "exponential"

    @classmethod
    def parse(cls, value) -> "EnvelopeKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"power_law": cls.POWER_LAW, "powerlaw": cls.POWER_LAW,
                   "diffusion": cls.POWER_LAW, "exponential": cls.EXPONENTIAL,
                   "exp": cls.EXPONENTIAL}
        if key not in aliases:
            raise ValueError(f"unknown envelope kind {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class NuisanceDecay:
    """Additive exponential decay plus offset seen in measured autocorrelations."""

    amplitude: float
    t_exp: float
    offset: float = 0.0

    def __post_init__(self):
        if not (self.t_exp > 0 and math.isfinite(self.t_exp)):
            raise ValueError("t_exp must be positive and finite")
        if not (math.isfinite(self.amplitude) and math.isfinite(self.offset)):
            raise ValueError("nuisance amplitude and offset must be finite")

    def __call__(self, t):
        return self.amplitude * np.exp(-np.asarray(t, dtype=float) / self.t_exp) + self.offset


@dataclass(frozen=True)
class CorrelationModel:
    """Phase covariance law ``phi_rms^2 cos(delta t) C(t / t_d)``.

    Attributes
    ----------
    phi_rms : float
        rms accumulated phase per acquisition (rad).
    delta : float
        Angular frequency offset (rad/s).
    t_d : float
        Diffusion (correlation) time (s).
    kind : EnvelopeKind
    nuisance : NuisanceDecay, optional
    """

    phi_rms: float
    delta: float
    t_d: float
    kind: EnvelopeKind = EnvelopeKind.POWER_LAW
    nuisance: Optional[NuisanceDecay] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EnvelopeKind.parse(self.kind))
        if not self.phi_rms >= 0:
            raise ValueError("phi_rms must be >= 0")
        if not self.delta >= 0:
            raise ValueError("delta must be >= 0")
        if not (self.t_d > 0 and math.isfinite(self.t_d)):
            raise ValueError("t_d must be positive and finite")

    def envelope(self, z):
        return envelope(self.kind, z)


def _odd_double_factorial(n: int) -> float:
    out = 1.0
    for k in range(1, 2 * n, 2):
        out *= k
    return out


def _small_coeffs(n_max: int) -> np.ndarray:
    # sqrt(pi) x erfcx(x) ~ sum_n a_n z^n, a_n = (-1)^n (2n-1)!! / 2^n
    a = [(-1) ** n * _odd_double_factorial(n) / 2.0 ** n for n in range(n_max + 1)]
    get = lambda n: a[n] if n >= 0 else 0.0  # noqa: E731
    # coefficient of z^(m - 3/2) after multiplying by the bracketed polynomial
    return np.array([-get(m) + get(m - 1) - 1.75 * get(m - 2) + 1.5 * get(m - 3)
                     for m in range(3, n_max + 1)])


def _large_coeffs(k_max: int) -> np.ndarray:
    # sqrt(pi) x erfcx(x) = sum_n e_n x^(n+1), e_n = sqrt(pi) (-1)^n / Gamma(n/2 + 1)
    get = lambda n: _SQRT_PI * (-1) ** n / math.gamma(n / 2 + 1) if n >= 0 else 0.0  # noqa: E731
    out = np.array([-get(k - 4) + get(k - 2) - 1.75 * get(k) + 1.5 * get(k + 2)
                    for k in range(3, k_max + 1)])
    out[0] += 1.0  # the bare z^-3/2 term
    return out


_C_SMALL = _small_coeffs(_N_SMALL)   # c_3 .. c_N multiplying z^(m - 3/2)
_B_LARGE = _large_coeffs(_N_LARGE)   # b_3 .. b_K multiplying x^k


def _power_law_small(z: np.ndarray) -> np.ndarray:
    # 1 - 6z + (4/sqrt(pi)) z^(3/2) sum_m c_m z^(m-3)
    poly = np.polynomial.polynomial.polyval(z, _C_SMALL)
    return 1.0 - 6.0 * z + _PREF * z * np.sqrt(z) * poly


def _power_law_mid(z: np.ndarray) -> np.ndarray:
    x = 1.0 / np.sqrt(z)
    sz = np.sqrt(z)
    bracket = (-x ** 3 + x - 1.75 * sz + 1.5 * z * sz)
    return _PREF * (x ** 3 - 1.5 * x + _SQRT_PI / 4 + 3.0 * sz - 1.5 * _SQRT_PI * z
                    + _SQRT_PI * x * erfcx(x) * bracket)


def _power_law_large(z: np.ndarray) -> np.ndarray:
    x = 1.0 / np.sqrt(z)
    return _PREF * x ** 3 * np.polynomial.polynomial.polyval(x, _B_LARGE)


def _check_z(z) -> np.ndarray:
    arr = np.asarray(z, dtype=float)
    if np.any(np.isnan(arr)):
        raise ValueError("envelope argument contains NaN")
    if np.any(arr < 0):
        raise ValueError("envelope argument z must be >= 0")
    return arr


def envelope_power_law(z):
    """Exact diffusion envelope ``C(z)``, ``z = t / T_D``.

    Accepts scalars or arrays. ``C(0) = 1`` and ``C(inf) = 0``.

    Raises
    ------
    ValueError
        For negative or NaN ``z``.
    FloatingPointError
        If a non-finite value is produced for finite input.
    """
    arr = _check_z(z)
    flat = np.atleast_1d(arr).ravel()
    out = np.empty_like(flat)
    zero = flat == 0
    inf = np.isinf(flat)
    small = (flat < SMALL_Z) & ~zero
    large = (flat > LARGE_Z) & ~inf
    mid = ~(zero | inf | small | large)
    out[zero] = 1.0
    out[inf] = 0.0
    if small.any():
        out[small] = _power_law_small(flat[small])
    if mid.any():
        out[mid] = _power_law_mid(flat[mid])
    if large.any():
        out[large] = _power_law_large(flat[large])
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite envelope value for finite input")
    out = out.reshape(np.shape(arr))
    return float(out) if out.ndim == 0 else out


def envelope_exponential(z):
    """``exp(-z)``; the square gives the ``exp(-2z)`` weight of the exponential model."""
    arr = _check_z(z)
    out = np.exp(-arr)
    return float(out) if out.ndim == 0 else out


def envelope(kind, z):
    kind = EnvelopeKind.parse(kind)
    if kind is EnvelopeKind.POWER_LAW:
        return envelope_power_law(z)
    return envelope_exponential(z)


def covariance(model: CorrelationModel, t):
    """Phase covariance at separation ``t`` (s), including any nuisance decay."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(np.isnan(t_arr)) or np.any(t_arr < 0):
        raise ValueError("time separation must be >= 0")
    with np.errstate(invalid="ignore"):
        # cos(delta * inf) is undefined but its product with C(inf) = 0 is not
        phase = np.where(np.isinf(t_arr), 0.0, np.cos(model.delta * np.where(np.isinf(t_arr), 0.0, t_arr)))
    out = model.phi_rms ** 2 * phase * np.asarray(envelope(model.kind, t_arr / model.t_d))
    if model.nuisance is not None:
        out = out + model.nuisance(t_arr)
    return float(out) if np.ndim(out) == 0 else out


def power_law_tail_terms():
    """Large-z expansion of ``z^2 C(z)^2`` as ``[(coef, power), ...]`` meaning ``sum coef * z^-power``.

    Converged to double precision for ``z >= LARGE_Z``.
    """
    sq = np.convolve(_B_LARGE, _B_LARGE)
    # C^2 = (16/pi) x^6 (sum b x^k)^2 and z^2 = x^-4, x = z^-1/2
    return [(16.0 / math.pi * float(q), (n + 2) / 2.0) for n, q in enumerate(sq)]
