"""Post-processing of photon traces: autocorrelation, block slicing, fitting,
estimator statistics and the Fourier-width baseline.

The fit model for an autocorrelation at lag ``t`` is

    A cos(delta t) C(t / T_D)  [+ A_n exp(-t / T_exp) + offset]

where the free amplitude ``A`` absorbs the readout scale and ``phi_rms^2``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sfft

from .envelopes import EnvelopeKind, envelope
from .simulate import PhotonTrace, make_rng

__all__ = [
    "AutocorrResult",
    "FitModelSpec",
    "FitResult",
    "EstimatorStats",
    "FourierResult",
    "autocorrelation",
    "slice_blocks",
    "model_curve",
    "levenberg_marquardt",
    "fit_autocorrelation",
    "estimator_distribution",
    "fourier_baseline",
    "SIGNAL_PARAMS",
    "NUISANCE_PARAMS",
]

SIGNAL_PARAMS = ("amplitude", "delta", "t_d")
_N_REFINE = 1
NUISANCE_PARAMS = ("nuisance_amplitude", "t_exp", "offset")


# --------------------------------------------------------------------------
# autocorrelation

@dataclass(frozen=True)
class AutocorrResult:
    """Autocorrelation at lags ``spacing * (1..K)``.

    ``lag0`` holds the zero-lag value (variance), kept apart because it
    carries shot noise the fit model does not describe.
    """

    lags: np.ndarray
    values: np.ndarray
    n_pairs: np.ndarray
    mean_subtracted: bool
    spacing: float
    lag0: float = math.nan
    n_samples: int = 0
    biased: bool = True

    def __post_init__(self):
        if self.lags.shape != self.values.shape or self.lags.shape != self.n_pairs.shape:
            raise ValueError("lags, values and n_pairs must match")
        if self.lags.size and (self.lags[0] <= 0 or np.any(np.diff(self.lags) <= 0)):
            raise ValueError("lags must be strictly increasing and start above 0")


def _acf_raw(x: np.ndarray, k_max: int) -> np.ndarray:
    n = x.size
    nfft = sfft.next_fast_len(2 * n - 1, real=True)
    spec = sfft.rfft(x, nfft)
    return sfft.irfft(spec.real ** 2 + spec.imag ** 2, nfft)[: k_max + 1]


def autocorrelation(trace: PhotonTrace, max_lag: Optional[float] = None, *,
                    biased: bool = True, mean_subtract: bool = True) -> AutocorrResult:
    """FFT autocorrelation of the counts at integer multiples of the spacing.

    Parameters
    ----------
    trace : PhotonTrace
    max_lag : float, optional
        Longest lag in seconds (default: half the record).  At most half the
        record length.
    biased : bool
        Divide by ``N`` (default) rather than by the pair count ``N - k``.
    """
    x = np.asarray(trace.counts, dtype=float)
    n = x.size
    if n < 4:
        raise ValueError("trace too short for an autocorrelation")
    k_half = n // 2
    if max_lag is None:
        k_max = k_half
    else:
        k_max = int(math.floor(max_lag / trace.spacing + 1e-9))
        if k_max > k_half:
            raise ValueError(f"max_lag {max_lag:.6g} s exceeds half the record "
                             f"({k_half * trace.spacing:.6g} s)")
        if k_max < 1:
            raise ValueError("max_lag shorter than one measurement period")
    if mean_subtract:
        x = x - x.mean()
    raw = _acf_raw(x, k_max)
    pairs = n - np.arange(k_max + 1)
    norm = np.full(k_max + 1, float(n)) if biased else pairs.astype(float)
    vals = raw / norm
    return AutocorrResult(trace.spacing * np.arange(1, k_max + 1), vals[1:], pairs[1:],
                          mean_subtract, trace.spacing, float(vals[0]), n, biased)


def _average(acs: Sequence[AutocorrResult]) -> AutocorrResult:
    first = acs[0]
    vals = np.mean([a.values for a in acs], axis=0)
    pairs = np.sum([a.n_pairs for a in acs], axis=0)
    lag0 = float(np.mean([a.lag0 for a in acs]))
    return AutocorrResult(first.lags, vals, pairs, first.mean_subtracted, first.spacing, lag0,
                          sum(a.n_samples for a in acs), first.biased)


def slice_blocks(trace: PhotonTrace, block_duration: float, group_size: int,
                 max_lag: Optional[float] = None, mode: str = "average") -> List[AutocorrResult]:
    """Group autocorrelations of contiguous blocks.

    The trace is cut into blocks of ``block_duration`` (rounded to whole
    measurements); each consecutive run of ``group_size`` blocks yields one
    result.  ``mode="average"`` averages the blocks' autocorrelations,
    ``mode="concatenate"`` autocorrelates the joined block data.  Blocks that
    do not fill a last group are dropped.
    """
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    n_block = int(round(block_duration / trace.spacing))
    if n_block < 4:
        raise ValueError("block shorter than 4 measurements")
    n_blocks = len(trace) // n_block
    n_groups = n_blocks // group_size
    if n_groups < 1:
        raise ValueError("trace holds fewer than one full group of blocks")
    if max_lag is None:
        max_lag = (n_block // 2) * trace.spacing
    out = []
    for g in range(n_groups):
        start = g * group_size * n_block
        if mode == "concatenate":
            part = trace.counts[start:start + group_size * n_block]
            out.append(autocorrelation(PhotonTrace(part, trace.spacing), max_lag))
        elif mode == "average":
            blocks = [autocorrelation(PhotonTrace(trace.counts[s:s + n_block], trace.spacing), max_lag)
                      for s in range(start, start + group_size * n_block, n_block)]
            out.append(_average(blocks))
        else:
            raise ValueError(f"unknown mode {mode!r}")
    return out


# --------------------------------------------------------------------------
# model and least squares

@dataclass(frozen=True)
class FitModelSpec:
    """Envelope, nuisance switch and box bounds ``{name: (lo, hi)}`` for every fitted parameter.

    ``init`` optionally narrows the range random starts are drawn from; it
    defaults to the bounds.
    """

    envelope: EnvelopeKind
    include_nuisance: bool
    bounds: Dict[str, Tuple[float, float]]
    init: Optional[Dict[str, Tuple[float, float]]] = None

    def __post_init__(self):
        object.__setattr__(self, "envelope", EnvelopeKind.parse(self.envelope))
        for name in self.param_names:
            if name not in self.bounds:
                raise ValueError(f"missing bounds for {name}")
            lo, hi = map(float, self.bounds[name])
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"bounds for {name} must be finite with lo < hi")
        for name, (lo, hi) in (self.init or {}).items():
            b_lo, b_hi = self.bounds[name]
            if not b_lo <= lo < hi <= b_hi:
                raise ValueError(f"init range for {name} must lie inside its bounds")

    @property
    def param_names(self):
        return SIGNAL_PARAMS + (NUISANCE_PARAMS if self.include_nuisance else ())

    @classmethod
    def default_for(cls, ac: AutocorrResult, envelope_kind=EnvelopeKind.POWER_LAW,
                    include_nuisance: bool = False, delta_bounds=None, t_d_bounds=None):
        """Ranges from the lag grid: delta in the Nyquist band, T_D between the
        spacing and the longest lag.  Starts for the amplitude are drawn up to
        twice the largest early value, its bound is ten times that (the
        envelope may already have decayed at the first lag)."""
        head = np.abs(ac.values[: max(1, min(10, ac.values.size))]).max()
        scale = head if head > 0 else 1.0
        b = {
            "amplitude": (0.0, 10.0 * scale),
            "delta": tuple(delta_bounds) if delta_bounds is not None else (0.0, math.pi / ac.spacing),
            "t_d": tuple(t_d_bounds) if t_d_bounds is not None else (ac.spacing, float(ac.lags[-1])),
        }
        if include_nuisance:
            b.update({"nuisance_amplitude": (-2.0 * scale, 2.0 * scale),
                      "t_exp": (ac.spacing, float(ac.lags[-1])),
                      "offset": (-scale, scale)})
        return cls(envelope_kind, include_nuisance, b, {"amplitude": (0.0, 2.0 * scale)})

    def with_bounds(self, **updates):
        init = {k: v for k, v in (self.init or {}).items() if k not in updates}
        return replace(self, bounds={**self.bounds, **updates}, init=init or None)


def model_curve(params: Dict[str, float], t, kind: EnvelopeKind, include_nuisance: bool = False):
    t = np.asarray(t, dtype=float)
    out = params["amplitude"] * np.cos(params["delta"] * t) * envelope(kind, t / params["t_d"])
    if include_nuisance:
        out = out + params["nuisance_amplitude"] * np.exp(-t / params["t_exp"]) + params["offset"]
    return out


@dataclass
class _LMResult:
    x: np.ndarray
    cost: float
    converged: bool
    n_iter: int
    jac: np.ndarray


def levenberg_marquardt(fun, x0, lower, upper, *, max_iter: int = 200, xtol: float = 1e-12,
                        ftol: float = 1e-14, gtol: float = 1e-10, diff_step: float = 1e-7) -> _LMResult:
    """Box-constrained Levenberg-Marquardt on ``sum(fun(x)^2)``.

    Parameters are mapped to the unit box.  A parameter sitting on a face
    whose gradient points out of the box is held fixed for that iteration
    (active set); the free parameters take a damped Gauss-Newton step that
    is projected back onto the box.  The Jacobian is a forward difference,
    rebuilt after each accepted step, and the damping follows the Nielsen
    update.  Convergence means a small projected gradient, a negligible
    step or a negligible relative decrease of the cost.
    """
    lower = np.asarray(lower, dtype=float)
    width = np.asarray(upper, dtype=float) - lower
    to_x = lambda u: lower + u * width  # noqa: E731

    def jac_at(u, r):
        J = np.empty((r.size, u.size))
        for i in range(u.size):
            h = diff_step * max(1.0, abs(u[i]))
            up = u.copy()
            # step away from the upper face when on it
            up[i] = u[i] + h if u[i] + h <= 1.0 else u[i] - h
            J[:, i] = (fun(to_x(up)) - r) / (up[i] - u[i])
        return J

    def projected_gradient(u, g):
        pg = g.copy()
        pg[(u <= 0.0) & (g > 0)] = 0.0
        pg[(u >= 1.0) & (g < 0)] = 0.0
        return pg

    u = np.clip((np.asarray(x0, dtype=float) - lower) / width, 0.0, 1.0)
    r = fun(to_x(u))
    cost = float(r @ r)
    J = jac_at(u, r)
    A = J.T @ J
    g = J.T @ r
    lam = 1e-3 * max(np.diag(A).max(), 1e-300)
    nu = 2.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        pg = projected_gradient(u, g)
        if np.max(np.abs(pg)) <= gtol * max(cost, 1e-300) ** 0.5 * max(np.sqrt(np.diag(A)).max(), 1e-300) \
                or cost == 0.0:
            converged = True
            break
        free = pg != 0.0
        Af = A[np.ix_(free, free)]
        diag = np.maximum(np.diag(Af), 1e-30 * max(np.diag(A).max(), 1e-300))
        try:
            step_f = np.linalg.solve(Af + lam * np.diag(diag), -g[free])
        except np.linalg.LinAlgError:
            lam *= nu
            nu *= 2.0
            continue
        step = np.zeros_like(u)
        step[free] = step_f
        u_new = np.clip(u + step, 0.0, 1.0)
        actual = u_new - u
        if np.linalg.norm(actual) <= xtol * (np.linalg.norm(u) + xtol):
            converged = lam < 1e10
            break
        r_new = fun(to_x(u_new))
        cost_new = float(r_new @ r_new)
        predicted = -(2 * actual @ g + actual @ A @ actual)
        rho = (cost - cost_new) / predicted if predicted > 0 else -1.0
        if cost_new < cost and rho > 0:
            rel = (cost - cost_new) / max(cost, 1e-300)
            u, r, cost = u_new, r_new, cost_new
            J = jac_at(u, r)
            A = J.T @ J
            g = J.T @ r
            lam *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
            if rel <= ftol:
                converged = True
                break
        else:
            lam *= nu
            nu *= 2.0
            if lam > 1e30:
                break
    jac_x = J / width
    return _LMResult(to_x(u), cost, converged, it, jac_x)


@dataclass(frozen=True)
class FitResult:
    params: Dict[str, float]
    param_errors: Dict[str, float]
    r_squared: float
    converged: bool
    n_iterations: int
    at_bound: Dict[str, bool] = field(default_factory=dict)
    joint_params: Optional[Dict[str, float]] = None

    @property
    def any_at_bound(self) -> bool:
        return any(self.at_bound.values())


def _r_squared(y, resid):
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(resid @ resid)
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else -math.inf)


def _std_errors(jac, cost, n_obs):
    dof = n_obs - jac.shape[1]
    if dof <= 0:
        return np.full(jac.shape[1], math.nan)
    s2 = cost / dof
    try:
        cov = np.linalg.pinv(jac.T @ jac) * s2
    except np.linalg.LinAlgError:
        return np.full(jac.shape[1], math.nan)
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))


def _bias_factor(ac: AutocorrResult):
    # the 1/N estimator shrinks lag k by (N - k)/N; the model carries the same factor
    if ac.biased and ac.n_samples > 0:
        return ac.n_pairs / ac.n_samples
    return np.ones_like(ac.values)


def _fit_once(t, y, names, kind, nuis, lo, hi, x0, scale):
    def resid(x):
        return scale * model_curve(dict(zip(names, x)), t, kind, nuis) - y
    with np.errstate(all="ignore"):
        res = levenberg_marquardt(resid, x0, lo, hi)
    return res


def _bounds_arrays(spec, names):
    lo = np.array([spec.bounds[n][0] for n in names], dtype=float)
    hi = np.array([spec.bounds[n][1] for n in names], dtype=float)
    # T_D and T_exp divide the lag, keep them strictly positive
    for i, n in enumerate(names):
        if n in ("t_d", "t_exp"):
            lo[i] = max(lo[i], 1e-300)
    return lo, hi


def _at_bound(x, lo, hi, names):
    tol = 1e-9 * (hi - lo)
    return {n: bool(x[i] - lo[i] <= tol[i] or hi[i] - x[i] <= tol[i]) for i, n in enumerate(names)}


def fit_autocorrelation(ac: AutocorrResult, spec: FitModelSpec, n_starts: int = 20, seed=0,
                        coarse_max_lag: Optional[float] = None) -> FitResult:
    """Multistart bounded least-squares fit; the start with the highest R^2 wins.

    With ``coarse_max_lag`` the random starts are fitted only on lags up to
    that value, where the cost has few local minima in ``delta``, and the
    winner is then refined on all lags.

    With ``include_nuisance`` the signal and nuisance are fitted jointly, the
    fitted nuisance is subtracted from the data, and the signal alone is
    refitted from the joint estimate; the reported parameters, errors and R^2
    are those of the refit.
    """
    if ac.values.size < 10:
        raise ValueError("autocorrelation needs at least 10 lags")
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    if not np.any(ac.values):
        raise ArithmeticError("autocorrelation is identically zero; no parameter is identifiable")
    t, y = ac.lags, ac.values
    w = _bias_factor(ac)
    names = spec.param_names
    lo, hi = _bounds_arrays(spec, names)
    rng = make_rng(seed)
    init = {**spec.bounds, **(spec.init or {})}
    i_lo = np.array([init[n][0] for n in names], dtype=float)
    i_hi = np.array([init[n][1] for n in names], dtype=float)
    starts = np.clip(i_lo + rng.random((n_starts, len(names))) * (i_hi - i_lo), lo, hi)
    n_coarse = t.size
    if coarse_max_lag is not None:
        n_coarse = max(10, int(np.searchsorted(t, coarse_max_lag, side="right")))
    tc, yc, wc = t[:n_coarse], y[:n_coarse], w[:n_coarse]
    total_iter = 0
    ranked = []
    for x0 in starts:
        res = _fit_once(tc, yc, names, spec.envelope, spec.include_nuisance, lo, hi, x0, wc)
        total_iter += res.n_iter
        r2 = _r_squared(yc, wc * model_curve(dict(zip(names, res.x)), tc, spec.envelope,
                                             spec.include_nuisance) - yc)
        # converged starts outrank unconverged ones, then R^2 decides
        ranked.append(((res.converged, r2), res))
    ranked.sort(key=lambda kr: kr[0], reverse=True)
    best_key, best = ranked[0]
    if n_coarse < t.size:
        # the long record can prefer a different coarse basin, so refine a few
        candidates = []
        for key, res in ranked:
            if len(candidates) == _N_REFINE:
                break
            if all(np.max(np.abs(res.x - c.x) / (hi - lo)) > 1e-3 for c in candidates):
                candidates.append(res)
        best_key = None
        for cand in candidates:
            res = _fit_once(t, y, names, spec.envelope, spec.include_nuisance, lo, hi, cand.x, w)
            total_iter += res.n_iter
            r2 = _r_squared(y, w * model_curve(dict(zip(names, res.x)), t, spec.envelope,
                                               spec.include_nuisance) - y)
            if best_key is None or (res.converged, r2) > best_key:
                best, best_key = res, (res.converged, r2)
    joint = dict(zip(names, map(float, best.x)))
    if not spec.include_nuisance:
        errs = _std_errors(best.jac, best.cost, y.size)
        return FitResult(joint, dict(zip(names, map(float, errs))), float(best_key[1]), bool(best.converged),
                         total_iter, _at_bound(best.x, lo, hi, names))
    nuis = {k: joint[k] for k in NUISANCE_PARAMS}
    y_sig = y - w * (nuis["nuisance_amplitude"] * np.exp(-t / nuis["t_exp"]) + nuis["offset"])
    s_names = SIGNAL_PARAMS
    s_lo, s_hi = _bounds_arrays(spec, s_names)
    x0 = np.array([joint[k] for k in s_names])
    res = _fit_once(t, y_sig, s_names, spec.envelope, False, s_lo, s_hi, x0, w)
    params = dict(zip(s_names, map(float, res.x)))
    r2 = _r_squared(y_sig, w * model_curve(params, t, spec.envelope) - y_sig)
    errs = _std_errors(res.jac, res.cost, y.size)
    return FitResult(params, dict(zip(s_names, map(float, errs))), float(r2),
                     bool(best.converged and res.converged), total_iter + res.n_iter,
                     _at_bound(res.x, s_lo, s_hi, s_names), joint)


# --------------------------------------------------------------------------
# ensemble statistics

@dataclass(frozen=True)
class EstimatorStats:
    estimates: np.ndarray
    mean: float
    rmse: float
    histogram: Tuple[np.ndarray, np.ndarray]
    reference: float
    n_excluded: int = 0
    fits: tuple = ()


def estimator_distribution(grouped_acs: Sequence[AutocorrResult], spec, n_starts: int = 20, seed=0,
                           reference_delta: Optional[float] = None, workers: int = 1,
                           coarse_max_lag: Optional[float] = None) -> EstimatorStats:
    """Fit every grouped autocorrelation and summarize the delta estimates.

    ``spec`` may be a :class:`FitModelSpec` or a callable ``ac -> FitModelSpec``.
    Each fit gets its own child seed, so results do not depend on ``workers``.
    Unconverged or failing fits are excluded and counted.  The rmse is taken
    about ``reference_delta`` when given, else about the ensemble mean.
    ``coarse_max_lag`` is passed to :func:`fit_autocorrelation`.
    """
    if len(grouped_acs) < 2:
        raise ValueError("need at least 2 grouped autocorrelations")
    children = np.random.SeedSequence(int(seed)).spawn(len(grouped_acs))

    def one(item):
        ac, ss = item
        s = spec(ac) if callable(spec) else spec
        try:
            return fit_autocorrelation(ac, s, n_starts, ss, coarse_max_lag)
        except (ValueError, ArithmeticError):
            return None

    items = list(zip(grouped_acs, children))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fits = list(pool.map(one, items))
    else:
        fits = [one(it) for it in items]
    good = [f for f in fits if f is not None and f.converged]
    est = np.array([f.params["delta"] for f in good], dtype=float)
    if est.size == 0:
        raise ArithmeticError("no fit converged")
    mean = float(est.mean())
    ref = mean if reference_delta is None else float(reference_delta)
    rmse = float(math.sqrt(np.mean((est - ref) ** 2)))
    hist = np.histogram(est, bins="fd") if est.size > 1 and np.ptp(est) > 0 else np.histogram(est, bins=1)
    return EstimatorStats(est, mean, rmse, (hist[1], hist[0]), ref, len(fits) - len(good), tuple(fits))


# --------------------------------------------------------------------------
# Fourier baseline

@dataclass(frozen=True)
class FourierResult:
    peak_frequency: float
    half_fwhm: float
    frequencies: np.ndarray
    spectrum: np.ndarray


def _crossing(f, s, i_peak, half, direction):
    i = i_peak
    while 0 <= i + direction < s.size and s[i + direction] > half:
        i += direction
    j = i + direction
    if j < 0:
        return f[0]
    if j >= s.size:
        raise ArithmeticError("spectrum does not fall to half maximum above the peak")
    # linear interpolation between i (above half) and j (at or below)
    return f[i] + (f[j] - f[i]) * (s[i] - half) / (s[i] - s[j])


def fourier_baseline(ac: AutocorrResult, zero_pad_factor: int = 8) -> FourierResult:
    """Peak frequency (Hz) and FWHM/2 (Hz) of the autocorrelation's spectrum.

    The autocorrelation is mirrored to negative lags, zero padded, and
    transformed without a window.  The measured zero lag is dominated by shot
    noise, so it is replaced by the first-lag value; leaving it out would
    subtract a constant from the spectrum and bias the width low.  The peak
    is refined by a parabola through the three bins around the maximum; the
    half-maximum crossings are linearly interpolated.  When
    the lower crossing falls below 0 Hz the peak is treated as one-sided.
    """
    if int(zero_pad_factor) != zero_pad_factor or zero_pad_factor < 1:
        raise ValueError("zero_pad_factor must be an integer >= 1")
    v = ac.values
    n_fft = int(zero_pad_factor) * (2 * v.size + 1)
    # two-sided, circularly symmetric layout: padding goes between the
    # positive lags and the mirrored negative ones
    seq = np.zeros(n_fft)
    seq[0] = v[0]
    seq[1:v.size + 1] = v
    seq[n_fft - v.size:] = v[::-1]
    spec = np.abs(sfft.rfft(seq))
    freqs = np.arange(spec.size) / (n_fft * ac.spacing)
    i = int(np.argmax(spec))
    if not spec[i] > 3.0 * np.median(spec):
        raise ArithmeticError("no spectral peak above 3x the median")
    if 0 < i < spec.size - 1:
        y0, y1, y2 = spec[i - 1], spec[i], spec[i + 1]
        den = y0 - 2 * y1 + y2
        off = 0.5 * (y0 - y2) / den if den != 0 else 0.0
        peak_f = freqs[i] + off * (freqs[1] - freqs[0])
        peak_v = y1 - 0.25 * (y0 - y2) * off
    else:
        peak_f, peak_v = freqs[i], spec[i]
    half = 0.5 * peak_v
    hi = _crossing(freqs, spec, i, half, +1)
    lo = _crossing(freqs, spec, i, half, -1)
    if lo <= 0.0 and spec[0] > half:
        # peak merges with its mirror at negative frequency
        fwhm = 2.0 * (hi - peak_f)
    else:
        fwhm = hi - lo
    return FourierResult(float(peak_f), float(0.5 * fwhm), freqs, spec)
