"""Command-line entry point.

Every command writes CSV artifacts into ``--out`` and prints a JSON summary
on stdout. Exit codes: 0 ok, 2 configuration error, 3 analysis error,
4 simulation divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import harmonics, multireset, presets, shaping, sidf, simulator
from .errors import ConfigError, ResetLoopError
from .linsys import tf_eval
from .reset_core import LoopTopology

DIGITS = 12


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.{DIGITS}g}"


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(f"{v:.{DIGITS}g}") if math.isfinite(v) else None
    return obj


def write_svg(path: Path, x, series: dict, xlabel: str, ylabel: str, logx: bool = True) -> Path:
    """Minimal line chart, one polyline per series."""
    W, H, pad = 640, 400, 50
    x = np.asarray(x, dtype=float)
    xs = np.log10(x) if logx else x
    ys = [np.asarray(v, dtype=float) for v in series.values()]
    finite = np.concatenate([y[np.isfinite(y)] for y in ys]) if ys else np.zeros(1)
    y0, y1 = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if y1 == y0:
        y1 = y0 + 1.0
    x0, x1 = float(xs.min()), float(xs.max()) if xs.size > 1 else float(xs.min()) + 1.0
    sx = lambda v: pad + (v - x0) / (x1 - x0 or 1.0) * (W - 2 * pad)  # noqa: E731
    sy = lambda v: H - pad - (v - y0) / (y1 - y0) * (H - 2 * pad)  # noqa: E731
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
        f'<rect x="{pad}" y="{pad}" width="{W - 2 * pad}" height="{H - 2 * pad}" fill="none" stroke="black"/>',
        f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle">{xlabel}</text>',
        f'<text x="15" y="{H / 2}" transform="rotate(-90 15 {H / 2})" text-anchor="middle">{ylabel}</text>',
        f'<text x="{pad}" y="{pad - 5}">{y1:.3g}</text>',
        f'<text x="{pad}" y="{H - pad + 15}">{y0:.3g}</text>',
    ]
    for i, (name, y) in enumerate(zip(series, ys)):
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xs, y) if np.isfinite(b))
        c = colors[i % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{c}" points="{pts}"/>')
        parts.append(f'<text x="{W - pad - 120}" y="{pad + 15 * (i + 1)}" fill="{c}">{name}</text>')
    parts.append("</svg>")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n")
    return path


def _db(x) -> float:
    return 20 * math.log10(abs(x)) if abs(x) > 0 else float("-inf")


# ---------------------------------------------------------------------------
# inputs


def load_system(spec: str) -> LoopTopology:
    """Preset name or path to a topology JSON file."""
    if spec in presets.CATALOG:
        return presets.get(spec)
    p = Path(spec)
    if not p.is_file():
        raise ConfigError(f"{spec!r} is neither a preset ({', '.join(sorted(presets.CATALOG))}) nor a file")
    try:
        return LoopTopology.from_dict(json.loads(p.read_text()))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse {spec}: {exc}") from exc


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    return cfg


class Options:
    """Flag value, else config-file field, else default."""

    def __init__(self, args: argparse.Namespace, defaults: dict):
        self._args = args
        self._cfg = _load_config(getattr(args, "config", None))
        self._defaults = defaults

    def __getattr__(self, key):
        v = getattr(self._args, key, None)
        if v is not None:
            return v
        if key in self._cfg:
            return self._cfg[key]
        return self._defaults.get(key)


def _floats(text: str, n: int | None = None) -> list[float]:
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc
    if n is not None and len(vals) != n:
        raise ConfigError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def _grid(fmin: float, fmax: float, points: int) -> np.ndarray:
    if not (0 < fmin < fmax) or points < 2:
        raise ConfigError("need 0 < fmin < fmax and points >= 2")
    return np.logspace(np.log10(fmin), np.log10(fmax), int(points))


# ---------------------------------------------------------------------------
# commands


def cmd_bode(o: Options, out: Path) -> dict:
    top = load_system(o.system)
    f = _grid(float(o.fmin), float(o.fmax), int(o.points))
    rows, mag, ms, h3 = [], [], [], []
    for fi in f:
        w = 2 * np.pi * fi
        l1 = sidf.open_loop_sidf(top, w)
        s = sidf.closed_sensitivity(top, w)
        row = [fi, _db(l1), math.degrees(np.angle(l1)), _db(s)]
        if o.harmonics:
            # whole samples per period, so the harmonic window spans integer periods
            fs = fi * math.ceil(max(float(o.sample_rate), 40 * fi) / fi)
            tr = simulator.simulate(top, simulator.SimulationConfig(simulator.Sine(1.0, fi), sample_rate=fs))
            rep = harmonics.harmonic_decompose(tr, "e", fi, 3)
            row.append(_db(rep.harmonic_magnitudes[3]))
            h3.append(row[-1])
        rows.append(row)
        mag.append(row[1])
        ms.append(row[3])
    header = ["freq_hz", "mag_l1_db", "phase_l1_deg", "mag_s_db"] + (["mag_e3_sim_db"] if o.harmonics else [])
    arts = [write_csv(out / "bode.csv", header, rows)]
    if o.svg:
        series = {"|L1| dB": mag, "|S| dB": ms}
        if o.harmonics:
            series["|E3| dB"] = h3
        arts.append(write_svg(out / "bode.svg", f, series, "frequency [Hz]", "magnitude [dB]"))
    return {"rows": len(rows), "artifacts": arts}


def cmd_multireset(o: Options, out: Path) -> dict:
    top = load_system(o.system)
    rep = multireset.sweep(top, float(o.fmin), float(o.fmax), float(o.step))
    rows = []
    for f, v in zip(rep.grid, rep.verdicts):
        if v is None:
            rows.append([f, None, None, None, None, None])
        else:
            rows.append([f, v.is_multiple, v.t1, v.t_m, v.delta_min_abs, v.crossing_time])
    header = ["freq_hz", "is_multiple", "t1_s", "tm_s", "delta_min_abs", "crossing_time_s"]
    arts = [write_csv(out / "multireset.csv", header, rows)]
    summary = {"boundary_hz": rep.boundary_hz, "transitions_hz": rep.transitions}
    arts.append(write_json(out / "boundary.json", {"boundary_hz": rep.boundary_hz}))
    warnings = [f"{f:g} Hz: {msg}" for f, msg in rep.errors.items()]
    return {**summary, "warnings": warnings, "artifacts": arts}


def _trace_rows(trace):
    names = ["r", "e", "z", "z_s", "a", "v", "m", "u", "y"]
    cols = [trace.t] + [trace.channels[n] for n in names]
    return ["t_s"] + names, zip(*cols)


def _write_resets(path: Path, trace) -> Path:
    n = trace.reset_indices.size
    nc = trace.reset_states[0][1].size if n else 1
    rows = []
    for (t_k, x), t_c in zip(trace.reset_states, trace.reset_instants):
        rows.append([t_k, t_c, *x])
    header = ["t_i_s", "crossing_time_s"] + [f"pre_state_{i}" for i in range(nc)]
    return write_csv(path, header, rows)


def _input_spec(o: Options):
    given = [k for k in ("sine", "step_amp", "composite", "file") if getattr(o, k) is not None]
    if len(given) != 1:
        raise ConfigError("give exactly one of --sine, --step-amp, --composite, --file")
    kind = given[0]
    if kind == "sine":
        amp, hz = _floats(o.sine, 2)
        return simulator.Sine(amp, hz)
    if kind == "step_amp":
        return simulator.Step(float(o.step_amp), float(o.duration), float(o.noise or 0.0), int(o.seed))
    if kind == "composite":
        sines = []
        for part in str(o.composite).split(","):
            try:
                amp, hz = (float(v) for v in part.split(":"))
            except ValueError as exc:
                raise ConfigError(f"composite terms look like AMP:HZ, got {part!r}") from exc
            sines.append((amp, hz))
        return simulator.Composite(tuple(sines), float(o.noise or 0.0), float(o.duration), int(o.seed))
    try:
        vals = np.loadtxt(o.file, delimiter=",", ndmin=1)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read samples from {o.file}: {exc}") from exc
    return simulator.Samples(tuple(np.asarray(vals, dtype=float).reshape(-1)))


def cmd_simulate(o: Options, out: Path) -> dict:
    top = load_system(o.system)
    cfg = simulator.SimulationConfig(
        _input_spec(o),
        sample_rate=float(o.sample_rate),
        transient_cycles=int(o.transient_cycles),
        measure_cycles=int(o.measure_cycles),
    )
    trace = simulator.simulate(top, cfg)
    m = simulator.metrics(trace)
    header, rows = _trace_rows(trace)
    arts = [write_csv(out / "trace.csv", header, rows), _write_resets(out / "resets.csv", trace)]
    arts.append(write_json(out / "metrics.json", m.to_dict()))
    return {**m.to_dict(), "resets": int(trace.reset_indices.size), "artifacts": arts}


def cmd_step(o: Options, out: Path) -> dict:
    top = load_system(o.system)
    res = simulator.step_response(
        top, float(o.amp), None if o.duration is None else float(o.duration), float(o.sample_rate),
        None if o.noise is None else float(o.noise), int(o.seed),
    )
    header, rows = _trace_rows(res.trace)
    arts = [write_csv(out / "step_trace.csv", header, rows), _write_resets(out / "step_resets.csv", res.trace)]
    fv = simulator.final_value_zs(top)
    verdict = {
        "limit_cycle": res.limit_cycle,
        "limit_cycle_predicted": simulator.limit_cycle_predicted(top),
        "oscillation_amplitude": res.oscillation_amplitude,
        "overshoot": res.overshoot,
        "final_value_zs": {"kind": fv.kind, "value": fv.value},
    }
    arts.append(write_json(out / "step_verdict.json", verdict))
    return {**verdict, "artifacts": arts}


def cmd_beta(o: Options, out: Path) -> dict:
    top = load_system(o.system)
    f = _grid(float(o.fmin), float(o.fmax), int(o.points))
    n = int(o.n)
    b = harmonics.beta_curve(top, f, n)
    arts = [write_csv(out / "beta.csv", ["freq_hz", f"beta_{n}"], zip(f, b))]
    return {"max_beta": float(b.max()), "argmax_hz": float(f[int(np.argmax(b))]), "artifacts": arts}


def cmd_design_shaper(o: Options, out: Path) -> dict:
    top = load_system(o.system)
    sigma = float(o.sigma)
    f = _grid(float(o.fmin), float(o.fmax), int(o.points))
    w = 2 * np.pi * f
    target = np.array([harmonics.target_shaper_magnitude(top, wi, sigma) for wi in w])
    arts = [write_csv(out / "target.csv", ["freq_hz", "target_mag_db"], zip(f, 20 * np.log10(target)))]
    params = presets.SHAPER
    if o.params is not None:
        params = shaping.PidShaperParams(*_floats(o.params, 5))
    if o.fit:
        params = shaping.fit_pid_shaper(w, target, presets.W_BW, params)
    report = {"constraints_ok": True, "violations": []}
    try:
        cs = shaping.pid_shaper(params, presets.W_BW)
    except ConfigError as exc:
        report = {"constraints_ok": False, "violations": [str(exc)]}
        cs = None
    arts.append(write_json(out / "shaper_params.json", params.__dict__))
    summary = {"params": params.__dict__, **report}
    if cs is not None:
        shaped = top.with_cs(cs)
        b = harmonics.beta_curve(shaped, f, 3)
        arts.append(write_csv(out / "beta3_achieved.csv", ["freq_hz", "beta_3"], zip(f, b)))
        summary["max_beta3"] = float(b.max())
        summary["meets_sigma"] = bool(b.max() < sigma)
        summary["phase_at_bw_deg"] = math.degrees(float(np.angle(tf_eval(cs, presets.W_BW))))
    return {**summary, "artifacts": arts}


def cmd_sweep_error(o: Options, out: Path) -> dict:
    top = load_system(o.system)
    freqs = _floats(o.freqs)
    if not freqs:
        raise ConfigError("--freqs is empty")
    rows = []
    for fi in freqs:
        fs = max(float(o.sample_rate), 40 * fi)
        m = simulator.sine_metrics(simulator.DiscreteLoop(top, fs), fi, float(o.amp))
        s = abs(sidf.closed_sensitivity(top, 2 * np.pi * fi))
        rows.append([fi, m.einf_over_rinf, s, abs(m.einf_over_rinf - s) / s, m.resets_per_cycle])
    header = ["freq_hz", "einf_over_rinf", "sidf_sensitivity", "rpe", "resets_per_cycle"]
    arts = [write_csv(out / "sweep_error.csv", header, rows)]
    return {"einf_over_rinf": {f"{r[0]:g}": r[1] for r in rows}, "artifacts": arts}


def cmd_case(o: Options, out: Path) -> dict:
    top = load_system(o.name)
    d = top.to_dict()
    arts = [write_json(out / f"{o.name}.json", d)] if o.write else []
    return {"topology": d, "artifacts": arts}


COMMANDS = {
    "bode": cmd_bode,
    "multireset": cmd_multireset,
    "simulate": cmd_simulate,
    "step": cmd_step,
    "beta": cmd_beta,
    "design-shaper": cmd_design_shaper,
    "sweep-error": cmd_sweep_error,
    "case": cmd_case,
}

DEFAULTS = {
    "fmin": 1.0,
    "fmax": 1000.0,
    "points": 200,
    "step": 1.0,
    "sample_rate": 1e4,
    "transient_cycles": 30,
    "measure_cycles": 10,
    "duration": None,
    "seed": 0,
    "amp": 1.0,
    "n": 3,
    "sigma": 0.6,
}


COMMAND_DEFAULTS = {"multireset": {"fmax": 50.0}}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="resetloop", description="Analysis and simulation of reset control loops.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, system=True):
        if system:
            sp.add_argument("--system", required=True, help="preset name or topology JSON file")
        sp.add_argument("--config", help="JSON file with option values (flags take precedence)")
        sp.add_argument("--out", default=".", help="output directory (default: current)")

    def band(sp, fmin, fmax):
        sp.add_argument("--fmin", type=float, help=f"lowest frequency in Hz (default {fmin})")
        sp.add_argument("--fmax", type=float, help=f"highest frequency in Hz (default {fmax})")

    sp = sub.add_parser("bode", help="first-harmonic loop and sensitivity magnitudes")
    common(sp)
    band(sp, 1, 1000)
    sp.add_argument("--points", type=int, help="log-spaced grid points (default 200)")
    sp.add_argument("--harmonics", action="store_true", default=None, help="add simulated third-harmonic error")
    sp.add_argument("--sample-rate", type=float, help="simulation sample rate floor in Hz")
    sp.add_argument("--svg", action="store_true", default=None, help="also write bode.svg")

    sp = sub.add_parser("multireset", help="multiple-reset sweep and boundary frequency")
    common(sp)
    band(sp, 1, 50)
    sp.add_argument("--step", type=float, help="grid step in Hz (default 1)")

    sp = sub.add_parser("simulate", help="time-domain simulation")
    common(sp)
    sp.add_argument("--sine", help="AMP,HZ")
    sp.add_argument("--step-amp", type=float, help="step amplitude")
    sp.add_argument("--composite", help="AMP:HZ,AMP:HZ,...")
    sp.add_argument("--file", help="CSV with one reference sample per line at the sample rate")
    sp.add_argument("--noise", type=float, help="white-noise level (power for composite, RMS for step)")
    sp.add_argument("--duration", type=float, help="seconds for step and composite inputs")
    sp.add_argument("--seed", type=int, help="noise seed (default 0)")
    sp.add_argument("--sample-rate", type=float, help="Hz (default 10000)")
    sp.add_argument("--transient-cycles", type=int, help="default 30")
    sp.add_argument("--measure-cycles", type=int, help="default 10")

    sp = sub.add_parser("step", help="step response and limit-cycle verdict")
    common(sp)
    sp.add_argument("--amp", type=float, help="step amplitude (default 1)")
    sp.add_argument("--duration", type=float, help="seconds (default: long enough for the verdict)")
    sp.add_argument("--sample-rate", type=float, help="Hz (default 10000)")
    sp.add_argument("--noise", type=float, help="reference noise RMS (default 1e-6 of the amplitude)")
    sp.add_argument("--seed", type=int, help="noise seed (default 0)")

    sp = sub.add_parser("beta", help="harmonic ratio beta_n over frequency")
    common(sp)
    band(sp, 1, 1000)
    sp.add_argument("--n", type=int, help="harmonic order (default 3)")
    sp.add_argument("--points", type=int, help="log-spaced grid points (default 200)")

    sp = sub.add_parser("design-shaper", help="target shaper magnitude and achieved beta_3")
    common(sp)
    band(sp, 1, 1000)
    sp.add_argument("--sigma", type=float, help="beta bound (default 0.6)")
    sp.add_argument("--points", type=int, help="log-spaced grid points (default 200)")
    sp.add_argument("--params", help="k_s,w_alpha,w_beta,w_eta,w_psi (default: reference shaper)")
    sp.add_argument("--fit", action="store_true", default=None, help="least-squares fit of k_s and w_alpha to the target")

    sp = sub.add_parser("sweep-error", help="simulated error ratios and SIDF prediction error")
    common(sp)
    sp.add_argument("--freqs", required=True, help="comma-separated Hz")
    sp.add_argument("--amp", type=float, help="sine amplitude (default 1)")
    sp.add_argument("--sample-rate", type=float, help="sample rate floor in Hz")

    sp = sub.add_parser("case", help="print a preset topology as JSON")
    common(sp, system=False)
    sp.add_argument("--name", required=True, help="preset name")
    sp.add_argument("--write", action="store_true", default=None, help="also write <name>.json")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        o = Options(args, {**DEFAULTS, **COMMAND_DEFAULTS.get(args.command, {})})
        summary = COMMANDS[args.command](o, out)
    except ResetLoopError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return exc.exit_code
    summary["artifacts"] = [str(a) for a in summary.get("artifacts", [])]
    print(json.dumps(_jsonable(summary), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
