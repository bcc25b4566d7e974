"""Parsing of declarative JSON run configurations into library objects.

Every physical quantity is a string with a unit suffix ("100 us", "5 kHz");
frequencies are ordinary (Hz) and become angular (rad/s) here.  Unknown
keys are rejected so that typos surface as configuration errors.
"""

from __future__ import annotations

import math
from typing import Any, Dict, Iterable, Optional

from .envelopes import CorrelationModel, EnvelopeKind
from .fisher import ProtocolTiming, ReadoutParams
from .units import parse_quantity

__all__ = ["ConfigError", "Section", "model_from", "readout_from", "timing_from"]

_REQUIRED = object()


class ConfigError(ValueError):
    pass


class Section:
    """Typed access to one JSON object; call :meth:`done` to reject leftovers."""

    def __init__(self, data: Optional[Dict[str, Any]], name: str):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"section {name!r} must be a JSON object")
        self.data, self.name, self.used = data, name, set()

    def _get(self, key, default):
        self.used.add(key)
        if key in self.data and self.data[key] is not None:
            return self.data[key]
        if default is _REQUIRED:
            raise ConfigError(f"{self.name}.{key} is required")
        return default

    def has(self, key) -> bool:
        return self.data.get(key) is not None

    def time(self, key, default=_REQUIRED):
        v = self._get(key, default)
        return v if v is default else self._unit(key, v, "time")

    def frequency(self, key, default=_REQUIRED):
        v = self._get(key, default)
        return v if v is default else self._unit(key, v, "frequency")

    def field(self, key, default=_REQUIRED):
        v = self._get(key, default)
        return v if v is default else self._unit(key, v, "field")

    def _unit(self, key, v, kind):
        try:
            return parse_quantity(v, kind)
        except ValueError as exc:
            raise ConfigError(f"{self.name}.{key}: {exc}") from None

    def number(self, key, default=_REQUIRED) -> float:
        v = self._get(key, default)
        if v is default:
            return v
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{self.name}.{key} must be a number")
        return float(v)

    def integer(self, key, default=_REQUIRED) -> int:
        v = self._get(key, default)
        if v is default:
            return v
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{self.name}.{key} must be an integer")
        return int(v)

    def string(self, key, default=_REQUIRED, choices: Optional[Iterable[str]] = None) -> str:
        v = self._get(key, default)
        if v is default:
            return v
        if not isinstance(v, str):
            raise ConfigError(f"{self.name}.{key} must be a string")
        if choices is not None and v not in choices:
            raise ConfigError(f"{self.name}.{key} must be one of {sorted(choices)}")
        return v

    def boolean(self, key, default=_REQUIRED) -> bool:
        v = self._get(key, default)
        if v is default:
            return v
        if not isinstance(v, bool):
            raise ConfigError(f"{self.name}.{key} must be true or false")
        return v

    def section(self, key) -> "Section":
        self.used.add(key)
        return Section(self.data.get(key), f"{self.name}.{key}")

    def raw(self, key, default=_REQUIRED):
        return self._get(key, default)

    def done(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ConfigError(f"unknown keys in {self.name}: {extra}")


def _wrap(fn, *args):
    try:
        return fn(*args)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def model_from(sec: Section) -> CorrelationModel:
    """``{"kind", "phi_rms", "f_delta", "t_d"}`` with f_delta in Hz."""
    kind = sec.string("kind", "power_law")
    try:
        kind = EnvelopeKind.parse(kind)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    phi = sec.number("phi_rms")
    f = sec.frequency("f_delta")
    t_d = sec.time("t_d")
    sec.done()
    return _wrap(CorrelationModel, phi, 2.0 * math.pi * f, t_d, kind)


def readout_from(sec: Section) -> ReadoutParams:
    """``{"eta0", "eta1"}`` or ``{"eta0", "chi"}``."""
    eta0 = sec.number("eta0")
    if sec.has("chi"):
        if sec.has("eta1"):
            raise ConfigError(f"{sec.name}: give eta1 or chi, not both")
        r = _wrap(ReadoutParams.from_contrast, sec.number("chi"), eta0)
    else:
        r = _wrap(ReadoutParams, eta0, sec.number("eta1"))
    sec.done()
    return r


def timing_from(sec: Section, total_time: Optional[float] = None) -> ProtocolTiming:
    """``{"tau_tilde", "tau_o", "total_time"}``; total_time may come from the caller."""
    tau_tilde = sec.time("tau_tilde")
    tau_o = sec.time("tau_o", 0.0)
    if total_time is None:
        total_time = sec.time("total_time")
    sec.done()
    return _wrap(ProtocolTiming.from_tau_tilde, tau_tilde, total_time, tau_o)
