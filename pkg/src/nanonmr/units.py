"""Unit-suffixed quantities ("100 us", "2 kHz", "0.1 G") converted to SI floats.

Conversion goes through :class:`decimal.Decimal`, so the same quantity
written in different units ("100 us", "0.1 ms", "0.0001 s") maps to the
identical float.
"""

from __future__ import annotations

import re
from decimal import Decimal, InvalidOperation

__all__ = ["UnitError", "parse_quantity", "parse_quantity_decimal", "TIME", "FREQUENCY", "FIELD"]


class UnitError(ValueError):
    pass


TIME = {
    "s": "1", "sec": "1", "ms": "1e-3", "us": "1e-6", "µs": "1e-6", "μs": "1e-6",
    "ns": "1e-9", "ps": "1e-12", "min": "60", "h": "3600", "hr": "3600",
}
FREQUENCY = {"hz": "1", "khz": "1e3", "mhz": "1e6", "ghz": "1e9"}
FIELD = {"t": "1", "mt": "1e-3", "ut": "1e-6", "µt": "1e-6", "nt": "1e-9", "g": "1e-4", "mg": "1e-7"}

_KINDS = {"time": TIME, "frequency": FREQUENCY, "field": FIELD}
_PATTERN = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([^\s\d].*?)?\s*$")


def parse_quantity_decimal(value, kind: str) -> Decimal:
    """Exact SI value of ``"<number> <unit>"`` as a Decimal."""
    table = _KINDS[kind]
    if not isinstance(value, str):
        raise UnitError(f"{kind} quantity {value!r} needs a unit suffix, e.g. '100 us'")
    m = _PATTERN.match(value)
    if not m or not m.group(2):
        raise UnitError(f"{kind} quantity {value!r} needs a unit suffix")
    unit = m.group(2)
    key = unit if unit in table else unit.lower()
    if key not in table:
        raise UnitError(f"unknown {kind} unit {unit!r}; known: {sorted(table)}")
    try:
        return Decimal(m.group(1)) * Decimal(table[key])
    except InvalidOperation as exc:
        raise UnitError(f"bad number in {value!r}") from exc


def parse_quantity(value, kind: str) -> float:
    return float(parse_quantity_decimal(value, kind))
