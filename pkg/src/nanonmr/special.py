"""Cosine integral.

``Ci(x) = gamma + ln x + Cin(x)`` with the entire function
``Cin(x) = sum_{k>=1} (-1)^(k+1) x^(2k) / (2k (2k)!)`` summed directly for
``x <= 4``.  Above that ``Ci(x) = -Re E1(i x)`` with ``E1`` from its
continued fraction (modified Lentz), which converges for every ``x > 0``.
"""

from __future__ import annotations

import math

import numpy as np

EULER_GAMMA = 0.57721566490153286060651209008240243

_SERIES_MAX = 4.0
_EPS = 1e-16
_MAX_TERMS = 200


def _cin_series(x: float) -> float:
    x2 = x * x
    term = x2 / 2.0  # x^2 / 2!, without the 1/(2k) factor
    total = term / 2.0
    for k in range(2, _MAX_TERMS):
        term *= -x2 / ((2 * k - 1) * (2 * k))
        inc = term / (2 * k)
        total += inc
        if abs(inc) <= _EPS * abs(total):
            return total
    raise ArithmeticError(f"Cin series did not converge at x={x}")


def _e1_imag(x: float) -> complex:
    # E1(ix) via the continued fraction of exp(ix) E1(ix)
    tiny = 1e-300
    b = complex(1.0, x)
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(2, _MAX_TERMS):
        a = -float((i - 1) ** 2)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta.real - 1.0) + abs(delta.imag) < _EPS:
            return h * complex(math.cos(x), -math.sin(x))
    raise ArithmeticError(f"E1 continued fraction did not converge at x={x}")


def _ci_scalar(x: float) -> float:
    if not x > 0:
        raise ValueError("cosine integral requires x > 0")
    if math.isinf(x):
        return 0.0
    if x <= _SERIES_MAX:
        return EULER_GAMMA + math.log(x) - _cin_series(x)
    return -_e1_imag(x).real


def _cin_scalar(x: float) -> float:
    if x < 0:
        raise ValueError("Cin requires x >= 0")
    if x == 0:
        return 0.0
    if x <= _SERIES_MAX:
        return _cin_series(x)
    return EULER_GAMMA + math.log(x) - _ci_scalar(x)


def cosine_integral(x):
    """``Ci(x) = -int_x^inf cos(t)/t dt`` for ``x > 0``."""
    if np.ndim(x) == 0:
        return _ci_scalar(float(x))
    return np.vectorize(_ci_scalar, otypes=[float])(np.asarray(x, dtype=float))


def cin(x):
    """``gamma + ln x - Ci(x) = int_0^x (1 - cos t)/t dt``, free of cancellation at small x."""
    if np.ndim(x) == 0:
        return _cin_scalar(float(x))
    return np.vectorize(_cin_scalar, otypes=[float])(np.asarray(x, dtype=float))
