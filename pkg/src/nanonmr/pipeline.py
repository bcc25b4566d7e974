"""End-to-end Monte Carlo check of frequency estimation against the Cramér–Rao bound.

simulate traces -> slice into grouped autocorrelations -> multistart fits
-> rmse of the frequency estimates -> compare with sqrt(1/I_delta) and with
the Fourier FWHM/2 proxy.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from .config import ConfigError, Section, model_from, readout_from
from .envelopes import CorrelationModel
from .estimate import (AutocorrResult, FitModelSpec, estimator_distribution, fourier_baseline,
                       slice_blocks)
from .fisher import ProtocolTiming, ReadoutParams, fisher_total_qdyne_numeric, rayleigh_resolvable
from .io import ensure_dir, write_csv, write_trace
from .simulate import CountModel, TraceConfig, simulate_qdyne_trace

__all__ = ["PipelineConfig", "run_pipeline", "truncate_autocorr", "NO_SIGNAL"]

NO_SIGNAL = "no signal detected"
_TWO_PI = 2.0 * math.pi
# a group counts as showing the signal when its fitted amplitude exceeds this
# many standard errors and its spectrum has a peak
_DETECT_SIGMA = 3.0


@dataclass(frozen=True)
class PipelineConfig:
    """Simulation and analysis settings; times in s, frequencies in rad/s.

    Attributes
    ----------
    max_lag : float
        Longest autocorrelation lag used by the fit.
    coarse_max_lag : float
        Lag window for the multistart stage of the fit.
    fourier_max_lag : float
        Lag window transformed by the Fourier baseline.
    block_duration : float, optional
        Slice length; None uses each whole trace as one block.
    group_size : int
        Blocks per grouped autocorrelation.
    write_traces : {"first", "all", "none"}
    """

    model: CorrelationModel
    readout: ReadoutParams
    tau_tilde: float
    n_measurements: int
    n_traces: int
    seed: int
    max_lag: float
    coarse_max_lag: float
    fourier_max_lag: float
    tau_o: float = 0.0
    count_model: CountModel = CountModel.POISSON
    t2: Optional[float] = None
    block_duration: Optional[float] = None
    group_size: int = 1
    mode: str = "average"
    n_starts: int = 20
    include_nuisance: bool = False
    zero_pad_factor: int = 8
    write_traces: str = "first"
    workers: int = 1

    def __post_init__(self):
        if self.n_traces < 1:
            raise ValueError("n_traces must be >= 1")
        if not 0 < self.coarse_max_lag <= self.max_lag:
            raise ValueError("need 0 < coarse_max_lag <= max_lag")
        if not self.fourier_max_lag > 0:
            raise ValueError("fourier_max_lag must be positive")
        if self.write_traces not in ("first", "all", "none"):
            raise ValueError("write_traces must be first, all or none")
        object.__setattr__(self, "count_model", CountModel.parse(self.count_model))

    @property
    def timing(self) -> ProtocolTiming:
        return ProtocolTiming.from_tau_tilde(self.tau_tilde, self.n_measurements * self.tau_tilde,
                                             self.tau_o)

    @property
    def group_duration(self) -> float:
        """Record length behind one frequency estimate."""
        n = self.n_measurements
        if self.block_duration is not None:
            n = int(round(self.block_duration / self.tau_tilde)) * self.group_size
        return n * self.tau_tilde

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        """Build from a JSON object with unit-suffixed quantities.

        Keys: ``model``, ``readout``, ``tau_tilde``, ``tau_o``,
        ``n_measurements``, ``n_traces``, ``seed``, ``count_model``, ``t2``
        and an ``analysis`` object holding the remaining fields.
        """
        top = Section(data, "config")
        top.string("task", "pipeline", choices=("pipeline",))
        model = model_from(top.section("model"))
        readout = readout_from(top.section("readout"))
        kw = dict(
            tau_tilde=top.time("tau_tilde"),
            tau_o=top.time("tau_o", 0.0),
            n_measurements=top.integer("n_measurements"),
            n_traces=top.integer("n_traces", 1),
            seed=top.integer("seed"),
            count_model=top.string("count_model", "poisson", choices=("poisson", "bernoulli")),
            t2=top.time("t2", None),
        )
        an = top.section("analysis")
        kw.update(
            max_lag=an.time("max_lag"),
            coarse_max_lag=an.time("coarse_max_lag"),
            fourier_max_lag=an.time("fourier_max_lag", None),
            block_duration=an.time("block_duration", None),
            group_size=an.integer("group_size", 1),
            mode=an.string("mode", "average", choices=("average", "concatenate")),
            n_starts=an.integer("n_starts", 20),
            include_nuisance=an.boolean("include_nuisance", False),
            zero_pad_factor=an.integer("zero_pad_factor", 8),
            write_traces=an.string("write_traces", "first", choices=("first", "all", "none")),
            workers=an.integer("workers", 1),
        )
        if kw["fourier_max_lag"] is None:
            kw["fourier_max_lag"] = kw["coarse_max_lag"]
        an.done()
        top.done()
        try:
            return cls(model, readout, **kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def truncate_autocorr(ac: AutocorrResult, max_lag: float) -> AutocorrResult:
    """The same autocorrelation restricted to lags ``<= max_lag``."""
    k = int(np.searchsorted(ac.lags, max_lag * (1 + 1e-12), side="right"))
    if k < 1:
        raise ValueError("max_lag is shorter than the first lag")
    return replace(ac, lags=ac.lags[:k], values=ac.values[:k], n_pairs=ac.n_pairs[:k])


def _trace_seeds(seed: int, n: int) -> List[int]:
    return [int(s) for s in np.random.SeedSequence(int(seed)).generate_state(n, dtype=np.uint64)]


def _fit_seed(seed: int) -> int:
    # independent of the trace seeds, which come from the plain SeedSequence(seed)
    return int(np.random.SeedSequence([int(seed), 1]).generate_state(1, dtype=np.uint64)[0])


def _dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _finite_or_none(x):
    return float(x) if x is not None and math.isfinite(x) else None


def _autocorr_rows(acs):
    for g, ac in enumerate(acs):
        yield (g, 0.0, ac.lag0, ac.n_samples)
        for lag, v, n in zip(ac.lags, ac.values, ac.n_pairs):
            yield (g, lag, v, n)


def run_pipeline(cfg: PipelineConfig, out_dir=None) -> dict:
    """Run the Monte Carlo pipeline and return the stats dictionary.

    With ``out_dir`` the artifacts ``trace_NNN.txt``, ``autocorrelations.csv``,
    ``fits.csv`` and ``stats.json`` are written there.  Artifacts are written
    as soon as they exist; if a later stage fails, ``stats.json`` records the
    failure with ``"status": "failed"`` and the exception propagates.
    """
    stats = {"status": "running", "n_traces": cfg.n_traces,
             "f_delta_true_hz": cfg.model.delta / _TWO_PI}
    if out_dir is not None:
        ensure_dir(out_dir)
    try:
        _run(cfg, out_dir, stats)
        stats["status"] = "ok"
    except Exception as exc:
        stats["status"] = "failed"
        stats["error"] = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        if out_dir is not None:
            _dump_json(stats, os.path.join(out_dir, "stats.json"))
    return stats


def _run(cfg: PipelineConfig, out_dir, stats: dict) -> None:
    timing = cfg.timing
    acs = []
    digest = None
    for i, seed in enumerate(_trace_seeds(cfg.seed, cfg.n_traces)):
        tc = TraceConfig(cfg.model, cfg.readout, timing, cfg.n_measurements, seed, cfg.count_model, cfg.t2)
        trace = simulate_qdyne_trace(tc)
        digest = digest or trace.meta["config_digest"]
        if out_dir is not None and (cfg.write_traces == "all" or (cfg.write_traces == "first" and i == 0)):
            write_trace(trace, os.path.join(out_dir, f"trace_{i:03d}.txt"))
        block = cfg.block_duration if cfg.block_duration is not None else trace.duration
        acs.extend(slice_blocks(trace, block, cfg.group_size, cfg.max_lag, cfg.mode))
    stats["n_groups"] = len(acs)
    if out_dir is not None:
        write_csv(os.path.join(out_dir, "autocorrelations.csv"), ("group", "lag_s", "value", "n_pairs"),
                  _autocorr_rows(acs))

    # Cramér–Rao reference at the record length behind one estimate
    info = fisher_total_qdyne_numeric(cfg.model, cfg.readout, timing.with_total_time(cfg.group_duration)).value
    crb = 1.0 / math.sqrt(info) if info > 0 else math.inf
    stats.update(fisher_information=info, crb_rad_s=_finite_or_none(crb),
                 crb_hz=_finite_or_none(crb / _TWO_PI),
                 resolvable=bool(info > 0 and rayleigh_resolvable(info, cfg.model.delta)),
                 group_duration_s=cfg.group_duration)

    fourier = []
    for ac in acs:
        try:
            fourier.append(fourier_baseline(truncate_autocorr(ac, cfg.fourier_max_lag), cfg.zero_pad_factor))
        except (ArithmeticError, ValueError):
            fourier.append(None)
    widths = [fb.half_fwhm for fb in fourier if fb is not None]
    stats["fourier"] = {
        "n_failed": sum(fb is None for fb in fourier),
        "mean_half_fwhm_hz": float(np.mean(widths)) if widths else None,
        "mean_peak_hz": float(np.mean([fb.peak_frequency for fb in fourier if fb is not None])) if widths else None,
        "window_s": cfg.fourier_max_lag,
    }

    def spec_for(ac):
        return FitModelSpec.default_for(ac, cfg.model.kind, cfg.include_nuisance)

    flags = []
    try:
        es = estimator_distribution(acs, spec_for, cfg.n_starts, _fit_seed(cfg.seed),
                                    reference_delta=cfg.model.delta, workers=cfg.workers,
                                    coarse_max_lag=cfg.coarse_max_lag)
        fits = es.fits
    except ArithmeticError:
        es, fits = None, ()
    detected = []
    rows = []
    for g in range(len(acs)):
        fit = fits[g] if g < len(fits) else None
        fb = fourier[g]
        ok = (fit is not None and fit.converged and fb is not None
              and fit.params["amplitude"] > _DETECT_SIGMA * fit.param_errors["amplitude"])
        detected.append(ok)
        p = fit.params if fit is not None else {}
        e = fit.param_errors if fit is not None else {}
        rows.append((g, fit is not None and fit.converged, fit.r_squared if fit is not None else None,
                     p.get("amplitude"), p.get("delta"), p.get("t_d"),
                     e.get("amplitude"), e.get("delta"), e.get("t_d"),
                     p["delta"] / _TWO_PI if fit is not None else None,
                     fb.peak_frequency if fb is not None else None,
                     fb.half_fwhm if fb is not None else None, ok))
    if out_dir is not None:
        write_csv(os.path.join(out_dir, "fits.csv"),
                  ("group", "converged", "r_squared", "amplitude", "delta_rad_s", "t_d_s",
                   "amplitude_err", "delta_err_rad_s", "t_d_err_s", "f_delta_hz",
                   "fourier_peak_hz", "fourier_half_fwhm_hz", "signal_detected"), rows)
    stats["fraction_detected"] = float(np.mean(detected))
    if stats["fraction_detected"] < 0.5:
        flags.append(NO_SIGNAL)
    if es is None:
        flags.append("no fit converged")
        stats.update(n_estimates=0, n_excluded=len(acs), rmse_rad_s=None, rmse_hz=None,
                     rmse_over_crb=None, fit_beats_fourier=None)
    else:
        ratio = es.rmse / crb if math.isfinite(crb) else None
        half = stats["fourier"]["mean_half_fwhm_hz"]
        edges, counts = es.histogram
        stats.update(
            n_estimates=int(es.estimates.size), n_excluded=int(es.n_excluded),
            mean_f_delta_hz=es.mean / _TWO_PI, bias_hz=(es.mean - cfg.model.delta) / _TWO_PI,
            rmse_rad_s=es.rmse, rmse_hz=es.rmse / _TWO_PI, rmse_over_crb=ratio,
            fit_beats_fourier=(bool(es.rmse / _TWO_PI < half) if half is not None else None),
            histogram={"edges_hz": [float(x) / _TWO_PI for x in edges],
                       "counts": [int(c) for c in counts]},
        )
    stats["flags"] = flags
    stats["config_digest"] = digest
