"""Command-line interface.

Every subcommand takes its parameters from flags or from a JSON file given
with ``--config`` (flags win).  Physical quantities carry unit suffixes
("25 us", "5 kHz", "0.1 G"); frequencies are ordinary (Hz).  Results go to
``--out`` (default stdout).  Exit codes: 0 success, 1 usage or
configuration error, 2 numeric failure, with a JSON error object on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from decimal import Decimal
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .config import ConfigError, Section, model_from, readout_from, timing_from
from .envelopes import EnvelopeKind, envelope
from .estimate import (FitModelSpec, estimator_distribution, fit_autocorrelation, fourier_baseline,
                       slice_blocks)
from .fisher import (GRID_PARAMETERS, GridAxis, GridSpec, ProtocolTiming, grid_map,
                     ratio_r_delta, rayleigh_resolvable)
from .io import ingest_timetags, read_timetags, read_trace, write_csv, write_trace
from .pipeline import PipelineConfig, run_pipeline, truncate_autocorr
from .protocol import (SensorPhysics, WATER_PROTON_DENSITY, larmor_shift, optimize_tau,
                       read_readout_trace, readout_window_optimize, sample_rate_compensation,
                       undersample_min_step, undersample_step)
from .simulate import CountModel, TraceConfig, simulate_cs_sweep, simulate_qdyne_trace
from .units import UnitError, parse_quantity_decimal

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
_TWO_PI = 2.0 * math.pi


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# flag <-> config plumbing

# (key, kind, help); kind is one of time, frequency, field, number, integer,
# string, bool, path.  Flags are --key-with-dashes; the JSON key is the same
# name with underscores.
_MODEL = [("kind", "string", "envelope: power_law or exponential"),
          ("phi_rms", "number", "rms phase per acquisition (rad)"),
          ("f_delta", "frequency", "frequency offset, e.g. '5 kHz'"),
          ("t_d", "time", "diffusion time, e.g. '100 us'")]
_READOUT = [("eta0", "number", "mean photons, spin state 0"),
            ("eta1", "number", "mean photons, spin state 1"),
            ("chi", "number", "relative contrast (eta0 - eta1) / eta0, instead of eta1")]
_TIMING = [("tau_tilde", "time", "measurement period tau + tau_o"),
           ("tau_o", "time", "overhead per measurement")]

_COMMANDS: Dict[str, List[Tuple[str, str, str]]] = {
    "envelope": [("kind", "string", "power_law or exponential"),
                 ("z", "string", "start:stop:n_points"),
                 ("log", "bool", "log-spaced points")],
    "fisher": _MODEL + _READOUT + _TIMING + [
        ("total_time", "time", "total experiment time"),
        ("method", "string", "quadrature, sum, closed or approx")],
    "ratio-map": [("workers", "integer", "threads")],
    "optimize": [("objective", "string", "signal or snr_rate"),
                 ("kind", "string", "envelope kind"),
                 ("t_d", "time", "diffusion time"),
                 ("t2", "time", "sensor coherence time (omit for none)"),
                 ("depth_nm", "number", "sensor depth in nm"),
                 ("b_rms", "field", "rms nuclear field, instead of depth"),
                 ("spin_density", "number", "nuclear spins per m^3"),
                 ("eta0", "number", "mean photons, state 0"),
                 ("eta1", "number", "mean photons, state 1"),
                 ("chi", "number", "relative contrast, instead of eta1"),
                 ("tau_o", "time", "overhead per measurement"),
                 ("tau_min", "time", "search lower bound"),
                 ("tau_max", "time", "search upper bound"),
                 ("readout_trace", "path", "CSV t_ns,counts0,counts1 for window optimization")],
    "undersample": [("f_larmor", "frequency", "nuclear Larmor frequency"),
                    ("f_target", "frequency", "desired aliased frequency"),
                    ("n_samples", "integer", "samples per target period"),
                    ("delta_b", "field", "field drift for Larmor shift"),
                    ("f_sample", "frequency", "sampling rate to compensate for the drift")],
    "simulate": _MODEL + _READOUT + _TIMING + [
        ("protocol", "string", "qdyne or cs"),
        ("n_measurements", "integer", "qdyne: number of measurements"),
        ("seed", "integer", "unsigned 64-bit seed"),
        ("count_model", "string", "poisson or bernoulli"),
        ("t2", "time", "sensor coherence time"),
        ("clamp_negative", "bool", "clip negative photon means to 0"),
        ("tau", "time", "cs: acquisition time"),
        ("tau_w", "string", "cs: waiting times start:stop:n with units, e.g. '0 us:1 ms:50'"),
        ("n_repeats", "integer", "cs: repeats per waiting time")],
    "estimate": [("trace", "path", "trace file"),
                 ("kind", "string", "envelope kind for the fit"),
                 ("max_lag", "time", "longest lag fitted"),
                 ("coarse_max_lag", "time", "lag window of the multistart stage"),
                 ("fourier_max_lag", "time", "lag window of the Fourier baseline"),
                 ("block_duration", "time", "slice length (default whole trace)"),
                 ("group_size", "integer", "blocks per group"),
                 ("mode", "string", "average or concatenate"),
                 ("n_starts", "integer", "random starts per fit"),
                 ("include_nuisance", "bool", "fit the exponential nuisance term"),
                 ("seed", "integer", "seed for the random starts"),
                 ("reference_f_delta", "frequency", "true offset for the rmse"),
                 ("zero_pad_factor", "integer", "Fourier zero padding")],
    "pipeline": [],
    "ingest": [("tags", "path", "time-tag file, integer ns per line"),
               ("tau_tilde", "time", "measurement period (whole ns)"),
               ("window_offset", "time", "window start within each period (whole ns)"),
               ("window_length", "time", "window length (whole ns)"),
               ("n_measurements", "integer", "trace length (default: up to the last tag)"),
               ("duration", "time", "record duration, instead of n_measurements")],
}

_HELP = {
    "envelope": "tabulate C(z) as CSV z,C",
    "fisher": "total Fisher information of both protocols and their ratio",
    "ratio-map": "R_delta over a two-parameter grid (JSON config)",
    "optimize": "optimal acquisition time and readout window",
    "undersample": "undersampling step and drift compensation",
    "simulate": "simulate a Qdyne photon trace or a CS sweep",
    "estimate": "fit autocorrelations of a trace file",
    "pipeline": "simulate, fit and compare with the Cramér-Rao bound (JSON config)",
    "ingest": "bin photon time tags into a trace file",
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nanonmr", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"nanonmr {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, params in _COMMANDS.items():
        sp = sub.add_parser(name, help=_HELP[name], description=_HELP[name])
        sp.add_argument("--config", help="JSON file with the parameters")
        sp.add_argument("--out", help="output path (directory for pipeline); default stdout")
        for key, kind, hlp in params:
            sp.add_argument("--" + key.replace("_", "-"), dest=key, default=None, help=f"{hlp} [{kind}]")
    return p


def _flag_value(raw: str, kind: str):
    if kind == "number":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"expected a number, got {raw!r}") from None
    if kind == "integer":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"expected an integer, got {raw!r}") from None
    if kind == "bool":
        if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"expected true or false, got {raw!r}")
        return raw.lower() in ("true", "1", "yes")
    return raw


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def _merged(args, command: str) -> dict:
    data = _load_config(args.config)
    task = data.pop("task", command)
    if task != command:
        raise ConfigError(f"config task {task!r} does not match command {command!r}")
    for key, kind, _ in _COMMANDS[command]:
        v = getattr(args, key, None)
        if v is not None:
            data[key] = _flag_value(v, kind)
    return data


def _z_range(spec: str, log: bool) -> np.ndarray:
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError("range must look like start:stop:n_points")
    try:
        start, stop, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"bad range {spec!r}") from None
    if n < 1:
        raise ConfigError("range needs at least one point")
    if not (math.isfinite(start) and math.isfinite(stop)) or stop < start or (n > 1 and stop == start):
        raise ConfigError("range needs finite start < stop")
    if start < 0:
        raise ConfigError("z must be >= 0")
    if n == 1:
        return np.array([start])
    if log:
        if start <= 0:
            raise ConfigError("log range needs start > 0")
        return np.geomspace(start, stop, n)
    return np.linspace(start, stop, n)


def _unit_range(spec: str, kind: str) -> np.ndarray:
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError("range must look like 'start unit:stop unit:n_points'")
    try:
        start, stop = (float(parse_quantity_decimal(s, kind)) for s in parts[:2])
        n = int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"bad range {spec!r}: {exc}") from None
    if n < 1 or stop < start or (n > 1 and stop == start):
        raise ConfigError("range needs start < stop and n >= 1")
    return np.array([start]) if n == 1 else np.linspace(start, stop, n)


def _clean(x):
    """JSON-safe value: non-finite floats become None, numpy scalars become Python."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    return x


def _emit_json(obj, out: Optional[str]) -> None:
    text = json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _subsection(sec: Section, keys) -> Section:
    """The given keys of a flat section, as their own section."""
    return Section({k: sec.raw(k, None) for k in keys if sec.has(k)}, sec.name)


def _whole_ns(value, key: str) -> int:
    try:
        ns = parse_quantity_decimal(value, "time") * Decimal(10 ** 9)
    except UnitError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    if ns != ns.to_integral_value():
        raise ConfigError(f"{key} must be a whole number of nanoseconds")
    return int(ns)


# --------------------------------------------------------------------------
# commands

def cmd_envelope(args) -> None:
    sec = Section(_merged(args, "envelope"), "envelope")
    try:
        kind = EnvelopeKind.parse(sec.string("kind", "power_law"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    z = _z_range(sec.string("z"), sec.boolean("log", False))
    sec.done()
    c = np.atleast_1d(envelope(kind, z))
    write_csv(args.out, ("z", "C"), zip(z, c))


def cmd_fisher(args) -> None:
    sec = Section(_merged(args, "fisher"), "fisher")
    model = model_from(_subsection(sec, [k for k, _, _ in _MODEL]))
    readout = readout_from(_subsection(sec, [k for k, _, _ in _READOUT]))
    timing = timing_from(_subsection(sec, ["tau_tilde", "tau_o", "total_time"]))
    method = sec.string("method", "quadrature", choices=("quadrature", "sum", "closed", "approx"))
    sec.done()
    try:
        r = ratio_r_delta(model, readout, readout, timing, timing, method)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = {"method": method, "R_delta": r.value, "underflow": r.underflow,
           "delta_rad_s": model.delta, "f_delta_hz": model.delta / _TWO_PI}
    for name, info in (("cs", r.i_cs), ("qd", r.i_qd)):
        out[f"I_{name}"] = info
        ok = math.isfinite(info) and info > 0
        out[f"crb_{name}_hz"] = 1.0 / math.sqrt(info) / _TWO_PI if ok else None
        out[f"resolvable_{name}"] = (rayleigh_resolvable(info, model.delta)
                                     if math.isfinite(info) and model.delta > 0 else None)
    _emit_json(out, args.out)


_AXIS_KIND = {"f_delta": "frequency", "t_d": "time", "tau_tilde": "time", "tau_o": "time",
              "total_time": "time", "f_delta_td": "number", "chi": "number", "eta0": "number",
              "phi_rms": "number"}


def _grid_value(sec: Section, key: str, name: str):
    kind = _AXIS_KIND[name]
    return sec.number(key) if kind == "number" else sec._unit(key, sec.raw(key), kind)


def _axis(sec: Section) -> GridAxis:
    name = sec.string("name", choices=GRID_PARAMETERS)
    if sec.has("values"):
        raw = sec.raw("values")
        if not isinstance(raw, list):
            raise ConfigError(f"{sec.name}.values must be a list")
        vals = [_grid_value(Section({"v": v}, sec.name), "v", name) for v in raw]
    else:
        start, stop = _grid_value(sec, "start", name), _grid_value(sec, "stop", name)
        n = sec.integer("n")
        scale = sec.string("scale", "log", choices=("log", "linear"))
        if n < 1:
            raise ConfigError(f"{sec.name}.n must be >= 1")
        if n == 1:
            vals = [start]
        elif scale == "log":
            if not 0 < start < stop:
                raise ConfigError(f"{sec.name}: log axis needs 0 < start < stop")
            vals = np.geomspace(start, stop, n)
        else:
            vals = np.linspace(start, stop, n)
    sec.done()
    try:
        return GridAxis(name, tuple(vals))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_ratio_map(args) -> None:
    sec = Section(_merged(args, "ratio-map"), "ratio-map")
    x, y = _axis(sec.section("x")), _axis(sec.section("y"))
    fsec = sec.section("fixed")
    fixed = {k: _grid_value(fsec, k, k) for k in list(fsec.data) if k in _AXIS_KIND}
    fsec.done()
    kind = sec.string("kind", "power_law")
    workers = sec.integer("workers", 1)
    sec.done()
    try:
        spec = GridSpec(x, y, fixed, kind)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cells = grid_map(spec, workers)
    for c in cells:
        if c.flag:
            warnings.warn(f"cell x={c.x!r} y={c.y!r}: {c.flag}", RuntimeWarning)
    write_csv(args.out, ("x", "y", "R_delta", "I_cs", "I_qd", "resolvable_cs", "resolvable_qd", "flag"),
              ((c.x, c.y, c.r_delta, c.i_cs, c.i_qd, c.resolvable_cs, c.resolvable_qd, c.flag)
               for c in cells))


def cmd_optimize(args) -> None:
    sec = Section(_merged(args, "optimize"), "optimize")
    out = {}
    trace_path = sec.raw("readout_trace", None)
    if trace_path is not None:
        try:
            w = readout_window_optimize(read_readout_trace(trace_path))
        except OSError as exc:
            raise ConfigError(f"cannot read {trace_path}: {exc.strerror}") from None
        out["readout_window"] = {"t_snr_s": w.t_snr, "t_fisher_s": w.t_fisher, "degenerate": w.degenerate}
    if sec.has("objective") or trace_path is None:
        objective = sec.string("objective", "snr_rate", choices=("signal", "snr_rate"))
        depth_nm = sec.number("depth_nm", None)
        b_rms = sec.field("b_rms", None)
        if depth_nm is None and b_rms is None:
            raise ConfigError("optimize needs depth_nm or b_rms")
        try:
            physics = SensorPhysics(t2=sec.time("t2", None),
                                    depth=depth_nm * 1e-9 if depth_nm is not None else None,
                                    spin_density=sec.number("spin_density", WATER_PROTON_DENSITY),
                                    b_rms=b_rms)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        readout = readout_from(_subsection(sec, ("eta0", "eta1", "chi")))
        try:
            kind = EnvelopeKind.parse(sec.string("kind", "power_law"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        t_d = sec.time("t_d")
        tau_o = sec.time("tau_o", 0.0)
        bounds = (sec.time("tau_min", 1e-7), sec.time("tau_max", 1e-2))
        res = optimize_tau(objective, physics, readout, kind, t_d, bounds, tau_o)
        out.update(objective=objective, tau_star_s=res.tau_star, value=res.value,
                   at_boundary=res.at_boundary, phi_rms=res.phi_rms, b_rms_t=physics.field_rms)
    sec.done()
    _emit_json(out, args.out)


def cmd_undersample(args) -> None:
    sec = Section(_merged(args, "undersample"), "undersample")
    out = {}
    f_l = sec.frequency("f_larmor", None)
    if f_l is not None:
        f_t = sec.frequency("f_target")
        try:
            out["t_s_min_s"] = undersample_min_step(f_l, f_t)
            if sec.has("n_samples"):
                t_s, k = undersample_step(f_l, f_t, sec.integer("n_samples"))
                out.update(t_s_s=t_s, k=k)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    db = sec.field("delta_b", None)
    if db is not None:
        shift = larmor_shift(db)
        out["larmor_shift_hz"] = shift
        f_s = sec.frequency("f_sample", None)
        if f_s is not None:
            if f_l is None:
                raise ConfigError("drift compensation needs f_larmor")
            out["f_sample_compensated_hz"] = sample_rate_compensation(f_l, shift, f_s)
    sec.done()
    if not out:
        raise ConfigError("undersample needs f_larmor/f_target or delta_b")
    _emit_json(out, args.out)


def cmd_simulate(args) -> None:
    sec = Section(_merged(args, "simulate"), "simulate")
    model = model_from(_subsection(sec, [k for k, _, _ in _MODEL]))
    readout = readout_from(_subsection(sec, [k for k, _, _ in _READOUT]))
    protocol = sec.string("protocol", "qdyne", choices=("qdyne", "cs"))
    seed = sec.integer("seed")
    count_model = sec.string("count_model", "poisson", choices=("poisson", "bernoulli"))
    t2 = sec.time("t2", None)
    if protocol == "qdyne":
        n = sec.integer("n_measurements")
        tau_tilde, tau_o = sec.time("tau_tilde"), sec.time("tau_o", 0.0)
        clamp = sec.boolean("clamp_negative", False)
        sec.done()
        if args.out is None:
            raise ConfigError("simulate needs --out for the trace file")
        try:
            timing = ProtocolTiming.from_tau_tilde(tau_tilde, n * tau_tilde, tau_o)
            cfg = TraceConfig(model, readout, timing, n, seed, CountModel.parse(count_model), t2, clamp)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        write_trace(simulate_qdyne_trace(cfg), args.out)
        return
    tau = sec.time("tau")
    tau_w = _unit_range(sec.string("tau_w"), "time")
    n_rep = sec.integer("n_repeats")
    sec.done()
    sweep = simulate_cs_sweep(model, readout, tau, tau_w, n_rep, seed, t2, count_model)
    write_csv(args.out, ("tau_w_s", "mean_difference"), zip(sweep.tau_w_values, sweep.contrast_means))


def cmd_estimate(args) -> None:
    sec = Section(_merged(args, "estimate"), "estimate")
    path = sec.string("trace")
    try:
        trace = read_trace(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        kind = EnvelopeKind.parse(sec.string("kind", "power_law"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    max_lag = sec.time("max_lag")
    coarse = sec.time("coarse_max_lag", None)
    f_lag = sec.time("fourier_max_lag", coarse if coarse is not None else max_lag)
    block = sec.time("block_duration", None)
    group = sec.integer("group_size", 1)
    mode = sec.string("mode", "average", choices=("average", "concatenate"))
    n_starts = sec.integer("n_starts", 20)
    nuis = sec.boolean("include_nuisance", False)
    seed = sec.integer("seed", 0)
    ref = sec.frequency("reference_f_delta", None)
    pad = sec.integer("zero_pad_factor", 8)
    sec.done()
    acs = slice_blocks(trace, block if block is not None else trace.duration, group, max_lag, mode)

    def spec_for(ac):
        return FitModelSpec.default_for(ac, kind, nuis)

    groups = []
    if len(acs) >= 2:
        es = estimator_distribution(acs, spec_for, n_starts, seed,
                                    reference_delta=None if ref is None else _TWO_PI * ref,
                                    coarse_max_lag=coarse)
        fits = es.fits
        edges, counts = es.histogram
        summary = {"n_estimates": int(es.estimates.size), "n_excluded": es.n_excluded,
                   "mean_f_delta_hz": es.mean / _TWO_PI, "rmse_hz": es.rmse / _TWO_PI,
                   "reference_f_delta_hz": es.reference / _TWO_PI,
                   "histogram": {"edges_hz": [e / _TWO_PI for e in edges], "counts": list(counts)}}
    else:
        fits = [fit_autocorrelation(acs[0], spec_for(acs[0]), n_starts, seed, coarse)]
        summary = None
    for ac, fit in zip(acs, fits):
        g = {"fit": None, "fourier": None}
        if fit is not None:
            g["fit"] = {"params": fit.params, "errors": fit.param_errors, "r_squared": fit.r_squared,
                        "converged": fit.converged, "at_bound": fit.at_bound,
                        "f_delta_hz": fit.params["delta"] / _TWO_PI}
        try:
            fb = fourier_baseline(truncate_autocorr(ac, f_lag), pad)
            g["fourier"] = {"peak_hz": fb.peak_frequency, "half_fwhm_hz": fb.half_fwhm}
        except (ArithmeticError, ValueError) as exc:
            g["fourier"] = {"error": str(exc)}
        groups.append(g)
    _emit_json({"n_groups": len(acs), "groups": groups, "summary": summary,
                "spacing_s": trace.spacing, "n_measurements": len(trace)}, args.out)


def cmd_pipeline(args) -> None:
    if args.config is None:
        raise ConfigError("pipeline needs --config")
    if args.out is None:
        raise ConfigError("pipeline needs --out DIRECTORY")
    cfg = PipelineConfig.from_dict(_load_config(args.config))
    run_pipeline(cfg, args.out)


def cmd_ingest(args) -> None:
    data = _merged(args, "ingest")
    sec = Section(data, "ingest")
    path = sec.string("tags")
    period = _whole_ns(sec.raw("tau_tilde"), "tau_tilde")
    offset = _whole_ns(sec.raw("window_offset", "0 ns"), "window_offset")
    length = _whole_ns(sec.raw("window_length"), "window_length")
    n = sec.integer("n_measurements", None)
    if sec.has("duration"):
        if n is not None:
            raise ConfigError("give n_measurements or duration, not both")
        n = _whole_ns(sec.raw("duration"), "duration") // period
    sec.done()
    if args.out is None:
        raise ConfigError("ingest needs --out for the trace file")
    try:
        tags = read_timetags(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    write_trace(ingest_timetags(tags, period, offset, length, n), args.out,
                comments=(f"ingested from time tags; window offset {offset} ns, length {length} ns",))


_DISPATCH = {
    "envelope": cmd_envelope, "fisher": cmd_fisher, "ratio-map": cmd_ratio_map,
    "optimize": cmd_optimize, "undersample": cmd_undersample, "simulate": cmd_simulate,
    "estimate": cmd_estimate, "pipeline": cmd_pipeline, "ingest": cmd_ingest,
}


def _error(kind: str, exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc),
                                 "exit_code": code}, sort_keys=True) + "\n")
    return code


def _json_warning(message, category, filename, lineno, file=None, line=None):
    sys.stderr.write(json.dumps({"warning": category.__name__, "message": str(message)}) + "\n")


def main(argv=None) -> int:
    """Entry point; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required; see --help")
    except UsageError as exc:
        return _error("usage", exc, EXIT_CONFIG)
    with warnings.catch_warnings():
        warnings.showwarning = _json_warning
        warnings.simplefilter("default")
        try:
            _DISPATCH[args.command](args)
        except (UsageError, ConfigError, UnitError) as exc:
            return _error("config", exc, EXIT_CONFIG)
        except ArithmeticError as exc:
            return _error("numeric", exc, EXIT_NUMERIC)
        except (ValueError, OSError) as exc:
            return _error("config", exc, EXIT_CONFIG)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
