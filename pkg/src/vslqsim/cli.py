"""Reproducible experiment driver.

Experiments are described by a flat INI file with one section per module
(see `CONFIG_SCHEMA`); every key has a documented default and unknown keys
are rejected.  A run writes, under its output directory:

    config_echo.ini     fully resolved configuration
    report.json         the experiment report (sorted keys, no timestamps)
    *.csv               tabular outputs (headers documented in the README)
    *.svg               optional envelope/error plots (plots = true)

Exit codes: 0 success, 2 configuration error, 3 numerical failure.  The
environment variable VSLQSIM_OUT sets the default output root.  Identical
config + master seed produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import algebra as qa
from . import bench, model as mdl, noise, pulse as pl
from .dynamics import IntegratorConfig
from .units import ANGULAR_PER_MHZ

__all__ = ["CONFIG_SCHEMA", "ConfigError", "load_config", "validate", "run", "main"]

EXPERIMENTS = ("idle", "gate1q", "gate2q", "sweep", "noise-lifetime",
               "measure", "calibrate")


class ConfigError(ValueError):
    """Schema violation in a run configuration."""


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_float_list(s: str):
    return tuple(float(x) for x in s.replace(",", " ").split())


def _parse_opt_float(s: str):
    return None if s.strip() == "" else float(s)


def _parse_ratio(s: str) -> float:
    return math.inf if s.strip().lower() in ("inf", "infinite") else float(s)


# (parser, default, one-line doc); defaults are authoritative
CONFIG_SCHEMA = {
    "run": {
        "experiment": (str, "sweep", "one of " + ", ".join(EXPERIMENTS)),
        "out_dir": (str, "out", "output directory (under VSLQSIM_OUT if relative)"),
        "master_seed": (int, 1234, "seed for every stochastic component"),
        "n_workers": (int, 0, "parallel workers; 0 = all cores"),
        "plots": (_parse_bool, False, "emit SVG plots (needs matplotlib)"),
    },
    "vslq": {
        "w_mhz": (float, 25.0, "logical coupling W"),
        "delta_mhz": (float, 300.0, "single-photon penalty delta"),
        "t1p_us": (float, 64.0, "primary photon-loss lifetime"),
        "omega_s_mhz": (_parse_opt_float, None, "shadow frequency; empty = W + delta/2"),
        "shadow_dim": (int, 2, "shadow qubit levels"),
    },
    "pulse": {
        "cycle_period_ns": (float, 100.0, "EC cycle period"),
        "ec_center_frac": (float, 0.35, "repair Gaussian center / period"),
        "ec_sigma_frac": (float, 0.15, "repair Gaussian sigma / period"),
        "ec_drive_frac": (float, 0.70, "drive window before the shadow dump"),
        "gamma_s_fast_mhz": (float, 25.0, "fast shadow dump rate"),
        "gate_center_frac": (float, 0.85, "gate pulse center / drive window"),
        "gate_sigma_frac": (float, 0.08, "gate pulse sigma / period"),
        "calibration_file": (str, "", "JSON cache of calibration outputs"),
    },
    "integrator": {
        "method": (str, "rk4_fixed", "rk4_fixed or rk45_adaptive"),
        "dt_ns": (float, 0.05, "fixed step size"),
        "sample_stride_ns": (float, 25.0, "expectation sampling stride"),
        "positivity_check": (str, "final", "off, final or samples"),
    },
    "bench": {
        "gate": (str, "CZZ", "idle, X_L, Z_L, Hadamard, XCX or CZZ"),
        "n_cycles": (int, 2, "EC cycles per gate (2 or 4)"),
        "t1p_grid_us": (_parse_float_list, (8.0, 16.0, 32.0, 64.0), "sweep grid"),
        "method": (str, "auto", "auto, span16, direct or pure"),
        "czz_envelope": (str, "quadratic_arch", "quadratic_arch or tanh_window"),
        "equilibrate_cycles": (int, 10, "EC cycles before benchmarking"),
    },
    "noise": {
        "t2r_ratio": (_parse_ratio, 1.0, "T2R / T1P; 'inf' disables dephasing"),
        "n_traces": (int, 100, "noise trajectories to average"),
        "drive_omega_mhz": (float, 2.63, "continuous EC Rabi amplitude (x 2pi)"),
        "gamma_s_mhz": (float, 23.3, "continuous shadow loss rate"),
        "duration_us": (float, 0.0, "simulated window; 0 = 2.5 T1P"),
        "dt_ns": (float, 0.5, "integration step for noise runs"),
        "sample_stride_ns": (float, 50.0, "observable sampling stride"),
    },
    "measure": {
        "resonator_dim": (int, 6, "readout resonator levels"),
        "kappa_mhz": (float, 1.0, "resonator loss rate"),
        "m_max_mhz": (float, 0.2, "readout coupling plateau"),
        "ramp_ns": (float, 30.0, "coupling ramp time"),
        "duration_ns": (float, 160.0, "measurement window"),
    },
}


def default_config() -> dict:
    return {sec: {k: spec[1] for k, spec in keys.items()}
            for sec, keys in CONFIG_SCHEMA.items()}


def load_config(path: str | Path, overrides=()) -> dict:
    """Parse and type-check an INI config; unknown keys are errors."""
    parser = configparser.ConfigParser()
    read = parser.read(str(path))
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    cfg = default_config()
    for section in parser.sections():
        if section not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            _apply(cfg, section, key, raw)
    for ov in overrides:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {ov!r}")
        dotted, raw = ov.split("=", 1)
        section, key = dotted.split(".", 1)
        _apply(cfg, section.strip(), key.strip(), raw.strip())
    return cfg


def _apply(cfg, section, key, raw):
    if section not in CONFIG_SCHEMA:
        raise ConfigError(f"unknown section [{section}]")
    if key not in CONFIG_SCHEMA[section]:
        raise ConfigError(f"unknown key {section}.{key}")
    parse = CONFIG_SCHEMA[section][key][0]
    try:
        cfg[section][key] = parse(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {section}.{key}: {exc}") from None


def validate(cfg: dict) -> list:
    """Schema and physics sanity diagnostics; errors make `run` exit 2."""
    diags = []

    def err(msg):
        diags.append(("error", msg))

    def warn(msg):
        diags.append(("warning", msg))

    if cfg["run"]["experiment"] not in EXPERIMENTS:
        err(f"run.experiment must be one of {EXPERIMENTS}")
    v = cfg["vslq"]
    if v["t1p_us"] <= 0:
        err("vslq.t1p_us must be positive")
    if v["w_mhz"] <= 0 or v["delta_mhz"] <= 0:
        err("vslq.w_mhz and vslq.delta_mhz must be positive")
    if cfg["bench"]["gate"] not in ("idle", "X_L", "Z_L", "Hadamard", "XCX", "CZZ"):
        err(f"bench.gate {cfg['bench']['gate']!r} unknown")
    if any(t <= 0 for t in cfg["bench"]["t1p_grid_us"]):
        err("bench.t1p_grid_us entries must be positive")
    if not (10.0 <= cfg["pulse"]["gamma_s_fast_mhz"] <= 50.0):
        warn("pulse.gamma_s_fast_mhz outside the tens-of-MHz dump regime")
    dt = cfg["integrator"]["dt_ns"]
    if dt <= 0:
        err("integrator.dt_ns must be positive")
    else:
        omega_s = v["omega_s_mhz"] if v["omega_s_mhz"] is not None \
            else v["w_mhz"] + v["delta_mhz"] / 2.0
        span = 2.0 * ANGULAR_PER_MHZ * (v["delta_mhz"] + 2.0 * omega_s)
        if ANGULAR_PER_MHZ * v["delta_mhz"] * dt > 1.0:
            warn(f"integrator.dt_ns = {dt} barely resolves delta "
                 f"(omega dt = {ANGULAR_PER_MHZ * v['delta_mhz'] * dt:.2f})")
        if span * dt > 2.8:
            err(f"integrator.dt_ns = {dt} is unstable for two-copy spectra "
                f"(|lambda| dt = {span * dt:.2f} > 2.8)")
    # peak CZZ coupling estimate vs the perturbative guard
    if cfg["bench"]["gate"] == "CZZ":
        t_gate = cfg["bench"]["n_cycles"] * cfg["pulse"]["cycle_period_ns"]
        w_a = ANGULAR_PER_MHZ * v["w_mhz"]
        peak = math.sqrt((math.pi / 2.0) * w_a / (ANGULAR_PER_MHZ ** 2
                                                  * t_gate * 8.0 / 15.0))
        if peak > v["w_mhz"] / 2.0:
            warn(f"estimated CZZ peak coupling {peak:.1f} MHz exceeds W/2; "
                 "consider n_cycles = 4")
    return diags


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------

def write_csv(path: Path, header, rows):
    """UTF-8, LF-terminated CSV with a documented header row."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_trajectory_csv(path: Path, times, expectations: dict):
    names = sorted(expectations)
    rows = []
    for i, t in enumerate(times):
        row = [float(t)]
        for n in names:
            v = expectations[n][i]
            row.append(float(np.real(v)))
        rows.append(row)
    write_csv(path, ["t_ns"] + names, rows)


def _echo_config(cfg: dict, path: Path):
    parser = configparser.ConfigParser()
    for sec, keys in cfg.items():
        parser[sec] = {}
        for k, v in keys.items():
            if v is None:
                parser[sec][k] = ""
            elif isinstance(v, tuple):
                parser[sec][k] = ", ".join(repr(x) for x in v)
            else:
                parser[sec][k] = repr(v) if isinstance(v, float) else str(v)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        parser.write(fh)


def _write_report(path: Path, payload: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# experiment wiring
# ---------------------------------------------------------------------------

def _geometry(cfg) -> pl.PulseGeometry:
    p = cfg["pulse"]
    return pl.PulseGeometry(
        cycle_period=p["cycle_period_ns"], ec_center_frac=p["ec_center_frac"],
        ec_sigma_frac=p["ec_sigma_frac"], ec_drive_frac=p["ec_drive_frac"],
        gamma_s_fast=p["gamma_s_fast_mhz"], gate_center_frac=p["gate_center_frac"],
        gate_sigma_frac=p["gate_sigma_frac"])


def _integrator(cfg) -> IntegratorConfig:
    i = cfg["integrator"]
    return IntegratorConfig(method=i["method"], dt=i["dt_ns"],
                            sample_stride=i["sample_stride_ns"],
                            positivity_check=i["positivity_check"])


def _bench_config(cfg, gate=None) -> bench.BenchmarkConfig:
    b, v, r = cfg["bench"], cfg["vslq"], cfg["run"]
    return bench.BenchmarkConfig(
        gate=gate or b["gate"], n_cycles=b["n_cycles"],
        t1p_grid=tuple(b["t1p_grid_us"]), w_mhz=v["w_mhz"],
        delta_mhz=v["delta_mhz"], shadow_dim=v["shadow_dim"],
        geometry=_geometry(cfg), integrator=_integrator(cfg),
        method=b["method"], czz_envelope=b["czz_envelope"],
        equilibrate_cycles=b["equilibrate_cycles"],
        n_workers=r["n_workers"] or None, master_seed=r["master_seed"])


def _params(cfg, copies=1) -> mdl.VslqParams:
    v = cfg["vslq"]
    return mdl.VslqParams(W=v["w_mhz"], delta=v["delta_mhz"], T1P=v["t1p_us"],
                          omega_S=v["omega_s_mhz"], shadow_dim=v["shadow_dim"],
                          copies=copies)


def _dump_envelopes(schedule: pl.GateSchedule, out: Path):
    t, cols = pl.sample_envelopes(schedule, dt=0.5)
    names = sorted(cols)
    rows = [[float(tv)] + [float(cols[n][i]) for n in names]
            for i, tv in enumerate(t)]
    write_csv(out / "envelopes.csv", ["t_ns"] + names, rows)
    with open(out / "schedule.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(schedule.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _gate_entry_rows(report):
    rows = []
    for e in report.entries:
        if "dir_b" in e:
            rows.append([e["dir_a"], e["dir_b"], e["f_before"], e["f_after"], e["delta"]])
        else:
            rows.append([e["dir"], "", e["f_before"], e["f_after"], e["delta"]])
    return rows


def _run_gate(cfg, out: Path, experiment: str) -> dict:
    gate = cfg["bench"]["gate"]
    if experiment == "idle":
        gate = "idle"
    bcfg = _bench_config(cfg, gate=gate)
    t1p = cfg["vslq"]["t1p_us"]
    report = bench.gate_error(bcfg, t1p)
    write_csv(out / "gate_error.csv",
              ["dir_a", "dir_b", "f_before", "f_after", "delta"],
              _gate_entry_rows(report))
    params = bcfg.params_at(t1p)
    layout = mdl.layout_for(params)
    _dump_envelopes(bench._build_schedule(bcfg, params, layout), out)
    return {"experiment": experiment, "report": report.to_dict()}


def _run_sweep(cfg, out: Path) -> dict:
    bcfg = _bench_config(cfg)
    sweep = bench.sweep_and_fit(bcfg)
    header = ["t1p_us", "p"] + sorted(sweep.baselines)
    rows = []
    for i, (t1p, p) in enumerate(sweep.points):
        rows.append([t1p, p] + [sweep.baselines[k][i] for k in sorted(sweep.baselines)])
    write_csv(out / "sweep.csv", header, rows)
    write_csv(out / "fit.csv", ["a", "b", "residual_rms"],
              [[sweep.a, sweep.b, sweep.residual_rms]])
    params = bcfg.params_at(sweep.points[0][0])
    layout = mdl.layout_for(params)
    _dump_envelopes(bench._build_schedule(bcfg, params, layout), out)
    if cfg["run"]["plots"]:
        _plot_sweep(sweep, out)
    return {"experiment": "sweep", "report": sweep.to_dict()}


def _run_noise(cfg, out: Path) -> dict:
    n, v, r = cfg["noise"], cfg["vslq"], cfg["run"]
    params = _params(cfg, copies=1)
    duration = n["duration_us"] * 1e3 if n["duration_us"] > 0 else None
    result = noise.lifetime_under_1f(
        params, n["t2r_ratio"], n["n_traces"],
        drive_omega=n["drive_omega_mhz"], gamma_s=n["gamma_s_mhz"],
        duration=duration, dt=n["dt_ns"], sample_stride=n["sample_stride_ns"],
        master_seed=r["master_seed"], n_workers=r["n_workers"] or None)
    write_csv(out / "lifetime.csv",
              ["t2r_ratio", "t1p_us", "n_traces", "t_l_us", "ratio",
               "fit_r2", "master_seed"],
              [[result.t2r_ratio, result.t1p_us, result.n_traces,
                result.t_l_us, result.ratio, result.fit_r2, result.master_seed]])
    write_trajectory_csv(out / "decay_curve.csv", result.times,
                         {"x_logical": result.mean_curve})
    payload = {k: getattr(result, k) for k in
               ("t2r_ratio", "t1p_us", "n_traces", "t_l_us", "ratio", "fit_r2",
                "amplitude_mhz", "bootstrap_std_us", "master_seed")}
    if math.isinf(payload["t2r_ratio"]):
        payload["t2r_ratio"] = "inf"
    return {"experiment": "noise-lifetime", "report": payload}


def _run_measure(cfg, out: Path) -> dict:
    m = cfg["measure"]
    params = _params(cfg, copies=1)
    mparams = mdl.MeasurementParams(resonator_dim=m["resonator_dim"],
                                    kappa=m["kappa_mhz"])
    rep = bench.measurement_pointer_study(
        params, mparams, m_max=m["m_max_mhz"], ramp_ns=m["ramp_ns"],
        duration=m["duration_ns"], dt=cfg["integrator"]["dt_ns"])
    write_trajectory_csv(out / "pointer.csv", rep.times,
                         {"p_quad_intact": rep.quad_intact,
                          "p_quad_lost": rep.quad_lost})
    return {"experiment": "measure", "report": rep.to_dict()}


def _run_calibrate(cfg, out: Path) -> dict:
    params = _params(cfg, copies=1)
    geometry = _geometry(cfg)
    amp = pl.calibrate_ec_amplitude(params, geometry)
    fid = pl.ec_recovery_fidelity(params, amp, geometry)
    payload = {"ec_amplitude_mhz": amp, "recovery_fidelity": fid}
    gate = cfg["bench"]["gate"]
    if gate in ("XCX", "CZZ"):
        params2 = _params(cfg, copies=2)
        layout = mdl.layout_for(params2)
        bcfg = _bench_config(cfg)
        schedule = bench._build_schedule(bcfg, params2, layout)
        payload["gate"] = gate
        payload["thetas"] = {k: v for k, v in schedule.meta["thetas"].items()}
        payload["phase_residual"] = schedule.meta["phase_residual"]
        _dump_envelopes(schedule, out)
    cal_file = cfg["pulse"]["calibration_file"]
    if cal_file:
        with open(cal_file, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return {"experiment": "calibrate", "report": payload}


def _plot_sweep(sweep, out: Path):    # pragma: no cover - optional extra
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return
    fig, ax = plt.subplots(figsize=(5, 4))
    t = [x for x, _ in sweep.points]
    ax.loglog(t, [y for _, y in sweep.points], "o-", label=sweep.gate)
    for name, vals in sorted(sweep.baselines.items()):
        ax.loglog(t, vals, "--", label=name)
    ax.set_xlabel("T1P (us)")
    ax.set_ylabel("error per gate")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out / "sweep.svg")
    plt.close(fig)


def run(config_path: str | Path, overrides=(), out_dir: str | None = None) -> int:
    """Execute one experiment; returns the process exit code."""
    try:
        cfg = load_config(config_path, overrides)
        diags = validate(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    errors = [m for lvl, m in diags if lvl == "error"]
    for lvl, msg in diags:
        print(f"{lvl}: {msg}", file=sys.stderr)
    if errors:
        return 2

    root = Path(os.environ.get("VSLQSIM_OUT", "."))
    out = Path(out_dir) if out_dir else Path(cfg["run"]["out_dir"])
    if not out.is_absolute():
        out = root / out
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out / "config_echo.ini")

    experiment = cfg["run"]["experiment"]
    try:
        if experiment in ("idle", "gate1q", "gate2q"):
            payload = _run_gate(cfg, out, experiment)
        elif experiment == "sweep":
            payload = _run_sweep(cfg, out)
        elif experiment == "noise-lifetime":
            payload = _run_noise(cfg, out)
        elif experiment == "measure":
            payload = _run_measure(cfg, out)
        elif experiment == "calibrate":
            payload = _run_calibrate(cfg, out)
        else:
            print(f"config error: unknown experiment {experiment}", file=sys.stderr)
            return 2
    except Exception as exc:
        _write_report(out / "failure.json",
                      {"experiment": experiment, "error": f"{type(exc).__name__}: {exc}"})
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    _write_report(out / "report.json", payload)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vslq", description="VSLQ gate-error simulator experiment driver")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute an experiment from an INI config")
    p_run.add_argument("config")
    p_run.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE")
    p_run.add_argument("--out", dest="out_dir", default=None)
    p_val = sub.add_parser("validate", help="check a config without running")
    p_val.add_argument("config")
    args = parser.parse_args(argv)

    if args.command == "validate":
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        diags = validate(cfg)
        for lvl, msg in diags:
            print(f"{lvl}: {msg}")
        return 2 if any(lvl == "error" for lvl, _ in diags) else 0
    return run(args.config, args.overrides, args.out_dir)


if __name__ == "__main__":          # pragma: no cover
    sys.exit(main())
