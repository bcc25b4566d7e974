"""Monte Carlo photon traces for Qdyne and CS under a statistically polarized signal.

The phase sequence is ``Phi_j = a_j cos(delta j dt) + b_j sin(delta j dt)``
with ``a``, ``b`` independent stationary Gaussian sequences of covariance
``phi_rms^2 C(|i - j| dt / T_D)``.  Both are drawn at once by circulant
embedding: the real and imaginary parts of one complex FFT of weighted
complex white noise are two independent exact realizations.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import fft as sfft

from .envelopes import CorrelationModel, envelope
from .fisher import ProtocolTiming, ReadoutParams

__all__ = [
    "CountModel",
    "TraceConfig",
    "PhotonTrace",
    "CsSweep",
    "CirculantEmbeddingError",
    "make_rng",
    "synthesize_amplitudes",
    "phase_sequence",
    "simulate_qdyne_trace",
    "simulate_cs_sweep",
    "cs_expected_mean",
]

log = logging.getLogger(__name__)

_NEG_TOL = 1e-6
_MAX_EMBED_GROWTH = 8


class CirculantEmbeddingError(ArithmeticError):
    pass


class CountModel(enum.Enum):
    POISSON = "poisson"
    BERNOULLI = "bernoulli"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower())


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator from an int, SeedSequence or existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    if seed is None or int(seed) < 0 or int(seed) >= 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if seed is None or int(seed) < 0 or int(seed) >= 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return np.random.SeedSequence(int(seed))


def _embedding_spectrum(n: int, dt: float, model: CorrelationModel):
    # smallest embedding whose eigenvalues are nonnegative within tolerance;
    # the covariance is evaluated on the longer range when it grows
    m_half = n - 1
    for _ in range(int(math.log2(_MAX_EMBED_GROWTH)) + 1):
        lags = np.arange(m_half + 1) * dt / model.t_d
        r = model.phi_rms ** 2 * np.asarray(envelope(model.kind, lags))
        row = np.concatenate([r, r[-2:0:-1]])
        lam = sfft.fft(row).real
        lam_max = lam.max()
        worst = lam.min()
        if worst >= -_NEG_TOL * lam_max:
            if worst < 0:
                log.warning("clipping %d negative circulant eigenvalues (min %.3g of max)",
                            int(np.sum(lam < 0)), worst / lam_max)
                warnings.warn("clipped small negative circulant eigenvalues", RuntimeWarning, stacklevel=3)
                lam = np.clip(lam, 0.0, None)
            return lam
        m_half *= 2
    raise CirculantEmbeddingError(
        f"circulant embedding not nonnegative-definite: min eigenvalue {worst:.3g}, "
        f"max {lam_max:.3g} (n={n}, dt/T_D={dt / model.t_d:.3g})")


def synthesize_amplitudes(n: int, dt: float, model: CorrelationModel, seed):
    """Two independent Gaussian sequences with covariance ``phi_rms^2 C(k dt / T_D)``.

    Parameters
    ----------
    n : int
        Length (>= 2).
    dt : float
        Spacing in seconds.
    model : CorrelationModel
        Only ``phi_rms``, ``t_d`` and ``kind`` are used; ``delta`` enters in
        :func:`phase_sequence`.
    seed : int or SeedSequence

    Returns
    -------
    a, b : ndarray
    """
    if int(n) != n or n < 2:
        raise ValueError("n must be an integer >= 2")
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = int(n)
    if model.phi_rms == 0:
        return np.zeros(n), np.zeros(n)
    rng = make_rng(_seed_sequence(seed))
    lam = _embedding_spectrum(n, dt, model)
    m = lam.size
    z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    y = sfft.fft(np.sqrt(lam / m) * z)
    return y.real[:n].copy(), y.imag[:n].copy()


def phase_sequence(a, b, model: CorrelationModel, dt: float) -> np.ndarray:
    """``Phi_j = a_j cos(delta j dt) + b_j sin(delta j dt)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("a and b must have the same length")
    wt = model.delta * dt * np.arange(a.size)
    return a * np.cos(wt) + b * np.sin(wt)


@dataclass(frozen=True)
class TraceConfig:
    model: CorrelationModel
    readout: ReadoutParams
    timing: ProtocolTiming
    n_measurements: int
    seed: int
    count_model: CountModel = CountModel.POISSON
    t2: Optional[float] = None
    clamp_negative: bool = False

    def __post_init__(self):
        if int(self.n_measurements) != self.n_measurements or self.n_measurements < 2:
            raise ValueError("n_measurements must be an integer >= 2")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "count_model", CountModel.parse(self.count_model))
        if self.t2 is not None and not self.t2 > 0:
            raise ValueError("t2 must be positive")
        span = self.n_measurements * self.timing.tau_tilde
        if abs(span - self.timing.total_time) > 0.01 * self.timing.total_time:
            warnings.warn(f"n_measurements * tau_tilde = {span:.6g} s differs from total_time "
                          f"{self.timing.total_time:.6g} s", RuntimeWarning, stacklevel=2)

    def digest(self) -> str:
        m, r, t = self.model, self.readout, self.timing
        payload = {
            "phi_rms": m.phi_rms, "delta": m.delta, "t_d": m.t_d, "kind": m.kind.value,
            "eta0": r.eta0, "eta1": r.eta1, "tau": t.tau, "tau_o": t.tau_o,
            "total_time": t.total_time, "n": int(self.n_measurements),
            "count_model": self.count_model.value, "t2": self.t2, "seed": int(self.seed),
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class PhotonTrace:
    counts: np.ndarray
    spacing: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1:
            raise ValueError("counts must be one-dimensional")
        if c.size and (np.any(c < 0) or not np.issubdtype(c.dtype, np.integer)):
            raise ValueError("counts must be nonnegative integers")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        object.__setattr__(self, "counts", c.astype(np.int64, copy=False))

    def __len__(self):
        return self.counts.size

    @property
    def duration(self) -> float:
        return self.counts.size * self.spacing


def _contrast(readout: ReadoutParams, tau: float, t2: Optional[float]) -> float:
    return readout.c * (math.exp(-tau / t2) if t2 is not None else 1.0)


def _draw_counts(rng, mean, count_model: CountModel):
    if count_model is CountModel.POISSON:
        return rng.poisson(mean)
    if np.any(mean > 1):
        raise ValueError("Bernoulli counts need expected photons <= 1 per readout")
    return (rng.random(mean.shape) < mean).astype(np.int64)


def _checked_mean(mean, clamp: bool):
    if np.any(mean < 0):
        if not clamp:
            raise ValueError("negative expected photon number; enable clamping to proceed")
        warnings.warn("clamping negative expected photon numbers to 0", RuntimeWarning, stacklevel=3)
        mean = np.clip(mean, 0.0, None)
    return mean


def simulate_qdyne_trace(config: TraceConfig) -> PhotonTrace:
    """Photon counts with mean ``eta - (c~/2) sin(Phi_j)`` at spacing ``tau_tilde``."""
    ss_amp, ss_counts = _seed_sequence(config.seed).spawn(2)
    dt = config.timing.tau_tilde
    n = int(config.n_measurements)
    a, b = synthesize_amplitudes(n, dt, config.model, ss_amp)
    phi = phase_sequence(a, b, config.model, dt)
    c_t = _contrast(config.readout, config.timing.tau, config.t2)
    mean = _checked_mean(config.readout.eta - 0.5 * c_t * np.sin(phi), config.clamp_negative)
    counts = _draw_counts(make_rng(ss_counts), mean, config.count_model)
    meta = {"seed": int(config.seed), "config_digest": config.digest()}
    return PhotonTrace(counts, dt, meta)


@dataclass(frozen=True)
class CsSweep:
    tau_w_values: np.ndarray
    contrast_means: np.ndarray
    n_repeats: int

    def __post_init__(self):
        tw = np.asarray(self.tau_w_values, dtype=float)
        cm = np.asarray(self.contrast_means, dtype=float)
        if tw.shape != cm.shape:
            raise ValueError("tau_w_values and contrast_means lengths differ")
        if np.any(np.diff(tw) <= 0):
            raise ValueError("tau_w_values must be strictly increasing")
        object.__setattr__(self, "tau_w_values", tw)
        object.__setattr__(self, "contrast_means", cm)


def cs_expected_mean(model: CorrelationModel, readout: ReadoutParams, t, t2=None, tau=0.0):
    """Exact expectation of the alternating-readout difference at separation ``t``.

    For jointly Gaussian phases, ``<sin Phi1 sin Phi2> = exp(-s^2) sinh(k)``
    with variance ``s^2`` and covariance ``k``; to leading order this is the
    covariance itself.
    """
    t = np.asarray(t, dtype=float)
    s2 = model.phi_rms ** 2
    k = s2 * np.cos(model.delta * t) * np.asarray(envelope(model.kind, t / model.t_d))
    return _contrast(readout, tau, t2) * math.exp(-s2) * np.sinh(k)


def simulate_cs_sweep(model: CorrelationModel, readout: ReadoutParams, tau: float,
                      tau_w_values: Sequence[float], n_repeats: int, seed,
                      t2: Optional[float] = None,
                      count_model: CountModel = CountModel.POISSON) -> CsSweep:
    """Correlation-spectroscopy sweep over waiting times ``tau_w``.

    Each repeat draws a phase pair with the model covariance at
    ``t = tau + tau_w`` and two readouts whose means are
    ``eta +/- (c~/2) sin(Phi1) sin(Phi2)`` (the +y and -y projections).
    The stored value is the mean of their difference.
    """
    if int(n_repeats) != n_repeats or n_repeats < 1:
        raise ValueError("n_repeats must be a positive integer")
    if not tau > 0:
        raise ValueError("tau must be positive")
    count_model = CountModel.parse(count_model)
    tw = np.asarray(tau_w_values, dtype=float)
    if np.any(tw < 0):
        raise ValueError("tau_w must be >= 0")
    c_t = _contrast(readout, tau, t2)
    children = _seed_sequence(seed).spawn(tw.size)
    means = np.empty(tw.size)
    s = model.phi_rms
    for i, (t_w, ss) in enumerate(zip(tw, children)):
        rng = make_rng(ss)
        t = tau + t_w
        rho = 0.0 if s == 0 else float(np.cos(model.delta * t) * envelope(model.kind, t / model.t_d))
        z1 = rng.standard_normal(n_repeats)
        z2 = rng.standard_normal(n_repeats)
        phi1 = s * z1
        phi2 = s * (rho * z1 + math.sqrt(max(0.0, 1.0 - rho * rho)) * z2)
        prod = np.sin(phi1) * np.sin(phi2)
        plus = _draw_counts(rng, _checked_mean(readout.eta + 0.5 * c_t * prod, False), count_model)
        minus = _draw_counts(rng, _checked_mean(readout.eta - 0.5 * c_t * prod, False), count_model)
        means[i] = float(np.mean(plus - minus))
    return CsSweep(tw, means, int(n_repeats))
