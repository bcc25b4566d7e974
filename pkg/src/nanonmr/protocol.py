"""Experimental-design calculators for Qdyne and CS runs.

Covers undersampling steps, shot-noise SNR, the phase per acquisition from
sensor depth, the optimal DD duration, readout-window selection and
sample-clock drift compensation.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .envelopes import EnvelopeKind, envelope
from .fisher import ReadoutParams

__all__ = [
    "GAMMA_ELECTRON",
    "GAMMA_PROTON",
    "GAMMA_PROTON_HZ",
    "MU0",
    "HBAR",
    "WATER_PROTON_DENSITY",
    "SensorPhysics",
    "ReadoutTrace",
    "OptimizeResult",
    "WindowResult",
    "undersample_min_step",
    "undersample_step",
    "snr_shot_noise",
    "snr_shot_noise_chi",
    "phi_rms_from",
    "brms_from_depth",
    "depth_from_brms",
    "qdyne_signal",
    "qdyne_snr_rate",
    "optimize_tau",
    "readout_window_optimize",
    "read_readout_trace",
    "larmor_shift",
    "sample_rate_compensation",
]

GAMMA_ELECTRON = 1.76085963023e11  # rad s^-1 T^-1
GAMMA_PROTON = 2.68e8              # rad s^-1 T^-1
GAMMA_PROTON_HZ = 42.6e6           # Hz / T
MU0 = 4e-7 * math.pi
HBAR = 1.054571817e-34
# protons per m^3 in liquid water
WATER_PROTON_DENSITY = 6.68e28


def _positive(name, value):
    if not (value > 0 and math.isfinite(value)):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class SensorPhysics:
    """Sensor and sample constants.

    ``b_rms`` may be given directly or derived from ``depth`` and
    ``spin_density``; when both are set they must agree within 1 %.
    ``t2=None`` means no sensor decoherence.
    """

    gamma_sensor: float = GAMMA_ELECTRON
    gamma_nuclear: float = GAMMA_PROTON
    t2: Optional[float] = None
    depth: Optional[float] = None
    spin_density: float = WATER_PROTON_DENSITY
    b_rms: Optional[float] = None

    def __post_init__(self):
        _positive("gamma_sensor", self.gamma_sensor)
        _positive("gamma_nuclear", self.gamma_nuclear)
        _positive("spin_density", self.spin_density)
        for name in ("t2", "depth", "b_rms"):
            val = getattr(self, name)
            if val is not None:
                _positive(name, val)
        if self.depth is not None and self.b_rms is not None:
            implied = brms_from_depth(self.depth, self.spin_density, self)
            if abs(implied - self.b_rms) > 0.01 * self.b_rms:
                raise ValueError(f"b_rms={self.b_rms:.4g} T inconsistent with depth "
                                 f"{self.depth:.4g} m (implies {implied:.4g} T)")

    @property
    def field_rms(self) -> float:
        if self.b_rms is not None:
            return self.b_rms
        if self.depth is None:
            raise ValueError("SensorPhysics needs b_rms or depth")
        return brms_from_depth(self.depth, self.spin_density, self)


# --------------------------------------------------------------------------
# undersampling, SNR, drift

def undersample_min_step(f_larmor: float, f_target: float) -> float:
    """Shortest sampling step ``1 / (f_L - f_target)`` that aliases ``f_L`` onto ``f_target``."""
    _positive("f_larmor", f_larmor)
    if f_target < 0:
        raise ValueError("f_target must be >= 0")
    if f_target >= f_larmor:
        raise ValueError("f_target must be below f_larmor")
    return 1.0 / (f_larmor - f_target)


def undersample_step(f_larmor: float, f_target: float, n_samples: int):
    """Sampling step giving about ``n_samples`` points per period of ``f_target``.

    Returns ``(t_s, k)`` with ``t_s = k * t_s,min`` and
    ``k = round((t_delta / t_s,min) / (n_samples - 1))`` rounded half away
    from zero and clamped to ``k >= 1``.
    """
    if int(n_samples) != n_samples or n_samples < 2:
        raise ValueError("n_samples must be an integer >= 2")
    _positive("f_target", f_target)
    t_min = undersample_min_step(f_larmor, f_target)
    ratio = (f_larmor - f_target) / f_target  # t_delta / t_min without rounding noise
    x = ratio / (n_samples - 1)
    k = max(1, int(math.floor(x + 0.5)))
    return k * t_min, k


def snr_shot_noise(readout: ReadoutParams, n_measurements: int) -> float:
    """``sqrt(N) (eta0 - eta1) / sqrt(eta0 + eta1)``."""
    if n_measurements < 1:
        raise ValueError("n_measurements must be >= 1")
    return math.sqrt(n_measurements) * readout.c / math.sqrt(readout.eta0 + readout.eta1)


def snr_shot_noise_chi(chi: float, eta0: float, n_measurements: int) -> float:
    """Same SNR written with the relative contrast: ``sqrt(N) chi sqrt(eta0) / sqrt(2 - chi)``."""
    if n_measurements < 1:
        raise ValueError("n_measurements must be >= 1")
    return math.sqrt(n_measurements) * chi * math.sqrt(eta0) / math.sqrt(2.0 - chi)


def larmor_shift(delta_b: float, gamma_hz_per_tesla: float = GAMMA_PROTON_HZ) -> float:
    """Larmor frequency change (Hz) for a field change ``delta_b`` (T).

    The product is formed from the shortest decimal forms of both inputs and
    rounded once, so decimal inputs give the decimal answer (0.1 G -> 426 Hz)
    instead of a binary product off by one ulp.
    """
    return float(Decimal(repr(float(gamma_hz_per_tesla))) * Decimal(repr(float(delta_b))))


def sample_rate_compensation(f_larmor: float, delta_f_larmor: float, f_sample: float) -> float:
    """Sample-clock change that keeps ``f_sample / f_larmor`` fixed."""
    _positive("f_larmor", f_larmor)
    return f_sample * delta_f_larmor / f_larmor


# --------------------------------------------------------------------------
# field and phase

def brms_from_depth(depth: float, spin_density: float = WATER_PROTON_DENSITY,
                    physics: Optional[SensorPhysics] = None) -> float:
    """rms field of a statistically polarized half-space at sensor depth ``depth``.

    ``B_rms^2 = rho (mu0 hbar gamma_n / 4 pi)^2 * 5 pi / (96 d^3)``.
    """
    _positive("depth", depth)
    _positive("spin_density", spin_density)
    g_n = physics.gamma_nuclear if physics is not None else GAMMA_PROTON
    coupling = MU0 * HBAR * g_n / (4 * math.pi)
    return math.sqrt(spin_density * coupling ** 2 * 5 * math.pi / (96 * depth ** 3))


def depth_from_brms(b_rms: float, spin_density: float = WATER_PROTON_DENSITY,
                    physics: Optional[SensorPhysics] = None) -> float:
    """Inverse of :func:`brms_from_depth`."""
    _positive("b_rms", b_rms)
    _positive("spin_density", spin_density)
    g_n = physics.gamma_nuclear if physics is not None else GAMMA_PROTON
    coupling = MU0 * HBAR * g_n / (4 * math.pi)
    return (spin_density * coupling ** 2 * 5 * math.pi / (96 * b_rms ** 2)) ** (1.0 / 3.0)


def phi_rms_from(tau, physics: SensorPhysics):
    """rms phase per acquisition, ``(2/pi) gamma_sensor B_rms tau``."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("tau must be positive")
    out = 2.0 / math.pi * physics.gamma_sensor * physics.field_rms * tau
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# DD duration

def qdyne_signal(tau, physics: SensorPhysics, readout: ReadoutParams,
                 envelope_kind: Optional[EnvelopeKind] = None, t_d: Optional[float] = None):
    """``(c/8) exp(-2 tau/T2) C(tau/T_D) (1 - exp(-2 phi_rms^2))``.

    ``envelope_kind=None`` drops the diffusion factor (``C = 1``) and
    ``physics.t2=None`` drops the decoherence factor.
    """
    tau = np.asarray(tau, dtype=float)
    phi = np.asarray(phi_rms_from(tau, physics))
    out = readout.c / 8.0 * -np.expm1(-2.0 * phi ** 2)
    if physics.t2 is not None:
        out = out * np.exp(-2.0 * tau / physics.t2)
    if envelope_kind is not None:
        if t_d is None:
            raise ValueError("t_d is required with an envelope")
        out = out * np.asarray(envelope(envelope_kind, tau / t_d))
    return float(out) if out.ndim == 0 else out


def qdyne_snr_rate(tau, tau_o: float, physics: SensorPhysics, readout: ReadoutParams,
                   envelope_kind: Optional[EnvelopeKind] = None, t_d: Optional[float] = None):
    """Signal times the square root of the sample rate, ``signal / sqrt(tau + tau_o)``."""
    if tau_o < 0:
        raise ValueError("tau_o must be >= 0")
    tau = np.asarray(tau, dtype=float)
    out = np.asarray(qdyne_signal(tau, physics, readout, envelope_kind, t_d)) / np.sqrt(tau + tau_o)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class OptimizeResult:
    tau_star: float
    value: float
    at_boundary: bool
    phi_rms: float = math.nan


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(f: Callable[[float], float], lo: float, hi: float, rtol: float):
    # golden-section search for a maximum, in log(tau)
    a, b = math.log(lo), math.log(hi)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(math.exp(c)), f(math.exp(d))
    while b - a > rtol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(math.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(math.exp(d))
    x = math.exp(0.5 * (a + b))
    return x, f(x)


def optimize_tau(objective: Union[str, Callable[[float], float]], physics: Optional[SensorPhysics] = None,
                 readout: Optional[ReadoutParams] = None, envelope_kind: Optional[EnvelopeKind] = None,
                 t_d: Optional[float] = None, bounds=(1e-7, 1e-2), tau_o: float = 0.0,
                 n_scan: int = 200, rtol: float = 1e-5) -> OptimizeResult:
    """Maximize ``"signal"``, ``"snr_rate"`` or any callable of ``tau``.

    A log-spaced scan brackets the best grid point, then golden-section
    search refines inside the neighbouring cells.  A maximizer on the first
    or last scan point is returned with ``at_boundary=True``.
    """
    lo, hi = map(float, bounds)
    if not 0 < lo < hi:
        raise ValueError("bounds must satisfy 0 < lo < hi")
    if callable(objective):
        f = lambda t: float(objective(t))  # noqa: E731
    elif objective == "signal":
        f = lambda t: qdyne_signal(t, physics, readout, envelope_kind, t_d)  # noqa: E731
    elif objective == "snr_rate":
        f = lambda t: qdyne_snr_rate(t, tau_o, physics, readout, envelope_kind, t_d)  # noqa: E731
    else:
        raise ValueError(f"unknown objective {objective!r}")
    grid = np.geomspace(lo, hi, n_scan)
    vals = np.array([f(t) for t in grid])
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("objective returned non-finite values during the scan")
    i = int(np.argmax(vals))
    phi = phi_rms_from(grid[i], physics) if physics is not None and not callable(objective) else math.nan
    if i == 0 or i == n_scan - 1:
        return OptimizeResult(float(grid[i]), float(vals[i]), True, phi)
    tau, val = _golden_max(f, grid[i - 1], grid[i + 1], rtol)
    if val < vals[i]:
        tau, val = float(grid[i]), float(vals[i])
    phi = phi_rms_from(tau, physics) if physics is not None and not callable(objective) else math.nan
    return OptimizeResult(tau, val, False, phi)


# --------------------------------------------------------------------------
# readout window

@dataclass(frozen=True)
class ReadoutTrace:
    """Cumulative expected photons per readout versus window end."""

    time_axis: np.ndarray
    counts0: np.ndarray
    counts1: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.time_axis, dtype=float)
        c0 = np.asarray(self.counts0, dtype=float)
        c1 = np.asarray(self.counts1, dtype=float)
        if t.ndim != 1 or t.size == 0 or c0.shape != t.shape or c1.shape != t.shape:
            raise ValueError("time_axis, counts0, counts1 must be equal-length 1-D arrays")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time_axis must be strictly increasing")
        if np.any(np.diff(c0) < 0) or np.any(np.diff(c1) < 0):
            warnings.warn("cumulative counts decrease somewhere", RuntimeWarning, stacklevel=2)
        if np.any(c1 > c0):
            warnings.warn("counts1 exceeds counts0 at some window ends", RuntimeWarning, stacklevel=2)
        object.__setattr__(self, "time_axis", t)
        object.__setattr__(self, "counts0", c0)
        object.__setattr__(self, "counts1", c1)


@dataclass(frozen=True)
class WindowResult:
    t_snr: float
    t_fisher: float
    merit_snr: np.ndarray
    merit_fisher: np.ndarray
    degenerate: bool


def readout_window_optimize(trace: ReadoutTrace) -> WindowResult:
    """Window end maximizing ``c / sqrt(2 eta)`` and ``c^2 / (4 eta + c^2)``.

    The maximizers are points of ``trace.time_axis``; the first maximum wins
    ties.  A trace with no positive contrast anywhere is flagged degenerate.
    """
    c0, c1 = trace.counts0, trace.counts1
    if not np.any(c0 > 0) and not np.any(c1 > 0):
        raise ValueError("readout trace has no counts")
    eta = 0.5 * (c0 + c1)
    c = c0 - c1
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.where(eta > 0, c / np.sqrt(2.0 * eta), 0.0)
        fisher = np.where(4 * eta + c * c > 0, c * c / (4.0 * eta + c * c), 0.0)
    degenerate = not np.any(c > 0)
    t = trace.time_axis
    return WindowResult(float(t[int(np.argmax(snr))]), float(t[int(np.argmax(fisher))]),
                        snr, fisher, degenerate)


def read_readout_trace(path) -> ReadoutTrace:
    """Read a CSV with header ``t_ns,counts0,counts1`` (times in ns)."""
    with open(Path(path), newline="") as fh:
        reader = csv.reader(row for row in fh if not row.lstrip().startswith("#"))
        header = [h.strip() for h in next(reader)]
        if header != ["t_ns", "counts0", "counts1"]:
            raise ValueError(f"expected header t_ns,counts0,counts1, got {','.join(header)}")
        rows = [[float(v) for v in r] for r in reader if r]
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    return ReadoutTrace(arr[:, 0] * 1e-9, arr[:, 1], arr[:, 2])
