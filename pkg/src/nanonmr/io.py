"""Text formats: photon trace files, time-tag files and fixed-column CSV tables.

Floats are written with 17 significant digits so that every value survives
a write/read round trip exactly.
"""

from __future__ import annotations

import csv
import io as _io
import os
import re
import sys
from decimal import Decimal
from typing import Iterable, Optional, Sequence

import numpy as np

from .simulate import PhotonTrace

__all__ = [
    "format_float",
    "write_trace",
    "read_trace",
    "read_timetags",
    "ingest_timetags",
    "write_csv",
    "read_csv",
    "ensure_dir",
]

_HEADER = re.compile(r"^spacing_s=(\S+)\s+seed=(\d+)\s*$")


def format_float(x) -> str:
    """17 significant digits; integers and bools pass through unchanged."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return "%.17g" % float(x)


def _open_out(path):
    return open(path, "w", newline="", encoding="utf-8")


def write_trace(trace: PhotonTrace, path, comments: Sequence[str] = ()) -> None:
    """Write ``trace`` as a trace file.

    The format is optional ``#`` comment lines, the header
    ``spacing_s=<float> seed=<uint64>``, then one count per line.  Traces
    without a seed (ingested data) are written with ``seed=0``.
    """
    seed = int(trace.meta.get("seed", 0))
    with _open_out(path) as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        if "config_digest" in trace.meta:
            fh.write(f"# config_digest={trace.meta['config_digest']}\n")
        fh.write(f"spacing_s={format_float(trace.spacing)} seed={seed}\n")
        buf = _io.StringIO()
        np.savetxt(buf, trace.counts, fmt="%d")
        fh.write(buf.getvalue())


def read_trace(path) -> PhotonTrace:
    """Read a trace file written by :func:`write_trace`."""
    spacing = seed = None
    counts = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            if spacing is None:
                m = _HEADER.match(s)
                if not m:
                    raise ValueError(f"{path}:{lineno}: expected header 'spacing_s=<float> seed=<uint64>'")
                spacing, seed = float(m.group(1)), int(m.group(2))
                continue
            try:
                v = int(s)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: count {s!r} is not an integer") from None
            if v < 0:
                raise ValueError(f"{path}:{lineno}: negative count")
            counts.append(v)
    if spacing is None:
        raise ValueError(f"{path}: missing trace header")
    return PhotonTrace(np.array(counts, dtype=np.int64), spacing, {"seed": seed})


def read_timetags(path) -> np.ndarray:
    """Integer-nanosecond photon arrival times, one per line, nondecreasing."""
    tags = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            try:
                tags.append(int(s))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: time tag {s!r} is not an integer") from None
    arr = np.array(tags, dtype=np.int64)
    if arr.size > 1 and np.any(np.diff(arr) < 0):
        i = int(np.argmax(np.diff(arr) < 0))
        raise ValueError(f"time tags decrease at entry {i + 1}")
    return arr


def ingest_timetags(tags_ns, tau_tilde_ns: int, window_offset_ns: int, window_length_ns: int,
                    n_measurements: Optional[int] = None) -> PhotonTrace:
    """Bin photon time tags into per-measurement counts.

    Measurement ``j`` counts the tags in the half-open window
    ``[j tau_tilde + offset, j tau_tilde + offset + length)``.  All times are
    integer nanoseconds, so window edges are exact.  When ``n_measurements``
    is None the trace runs up to the measurement holding the last tag
    (empty input then gives an empty trace).

    Raises
    ------
    ValueError
        For decreasing tags, a window longer than the period, or a window
        that spills into the next period.
    """
    tags = np.asarray(tags_ns, dtype=np.int64)
    period, off, length = int(tau_tilde_ns), int(window_offset_ns), int(window_length_ns)
    if period <= 0:
        raise ValueError("tau_tilde must be a positive number of nanoseconds")
    if length <= 0 or length > period:
        raise ValueError("window length must satisfy 0 < length <= tau_tilde")
    if off < 0 or off + length > period:
        raise ValueError("window must lie inside one period: 0 <= offset and offset + length <= tau_tilde")
    if tags.size > 1 and np.any(np.diff(tags) < 0):
        raise ValueError("time tags must be nondecreasing")
    if n_measurements is None:
        n_measurements = 0 if tags.size == 0 else max(0, int((tags[-1] - off) // period) + 1)
    n = int(n_measurements)
    if n < 0:
        raise ValueError("n_measurements must be >= 0")
    starts = np.arange(n, dtype=np.int64) * period + off
    counts = (np.searchsorted(tags, starts + length, side="left")
              - np.searchsorted(tags, starts, side="left"))
    return PhotonTrace(counts.astype(np.int64), float(Decimal(period) / Decimal(10 ** 9)), {"seed": 0})


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with a header row; floats at 17 significant digits."""
    fh = _open_out(path) if path is not None and path != "-" else None
    try:
        w = csv.writer(fh if fh is not None else sys.stdout, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) if not isinstance(v, str) else v for v in row])
    finally:
        if fh is not None:
            fh.close()


def read_csv(path):
    """Return ``(header, rows)`` with every cell as a string."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def ensure_dir(path) -> None:
    os.makedirs(path, exist_ok=True)
