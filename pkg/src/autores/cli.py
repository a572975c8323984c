"""Command-line entry point.

Every experiment is a subcommand taking a strict JSON config plus the
common flags --config, --out, --seed, --threads.  Unknown config fields
are rejected (exit 2, message names the field); runtime failures exit 1
with the originating module and time location.  Each run writes
manifest.json echoing the resolved config and the package version, and a
manifest is itself accepted as a config, so any run can be reproduced
from its output directory alone.  Numeric CSV cells carry 17 significant
digits, LF line endings, UTF-8.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .model import (SystemParams, NoiseSchedule, Schedule, constant_schedule,
                    diffusion_matrix, drift_perturbed, rhs_primary)
from .asymptotics import expand, evaluate
from .integrators import (IntegrationError, NoiseStream, Trajectory,
                          default_dt, integrate_ode, integrate_sde,
                          reference_solution)
from .lyapunov import (NoCertificate, certify, chain_a, spot_check,
                       thresholds, thresholds_beta)
from .ensemble import (EnsembleConfig, classify_capture,
                       classify_capture_noisy, exit_time_scaling,
                       run_ensemble)
from .pendulum import (inverse_map, seed_from_averaged, integrate_pendulum,
                       envelope_compare)

SUBCOMMANDS = ("series", "simulate", "ensemble", "exit-times", "certify",
               "thresholds", "pendulum", "figures")

_REQUIRED = object()


class ConfigError(Exception):
    """Config validation failure; field names the offending entry."""

    def __init__(self, field: str, msg: str):
        super().__init__(f"field '{field}': {msg}")
        self.field = field


# ---------------------------------------------------------------- schema

def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _f(lo=None, hi=None, lo_open=False, hi_open=False):
    def check(field, v):
        if not _is_num(v):
            raise ConfigError(field, f"expected a number, got {v!r}")
        v = float(v)
        if lo is not None and (v <= lo if lo_open else v < lo):
            raise ConfigError(field, f"must be {'>' if lo_open else '>='} {lo}")
        if hi is not None and (v >= hi if hi_open else v > hi):
            raise ConfigError(field, f"must be {'<' if hi_open else '<='} {hi}")
        return v
    return check


def _i(lo=None, hi=None):
    def check(field, v):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(field, f"expected an integer, got {v!r}")
        if lo is not None and v < lo:
            raise ConfigError(field, f"must be >= {lo}")
        if hi is not None and v > hi:
            raise ConfigError(field, f"must be <= {hi}")
        return v
    return check


def _b(field, v):
    if not isinstance(v, bool):
        raise ConfigError(field, f"expected true/false, got {v!r}")
    return v


def _s(*choices):
    def check(field, v):
        if not isinstance(v, str):
            raise ConfigError(field, f"expected a string, got {v!r}")
        if choices and v not in choices:
            raise ConfigError(field, f"must be one of {sorted(choices)}")
        return v
    return check


def _pair(field, v):
    if (not isinstance(v, (list, tuple)) or len(v) != 2
            or not all(_is_num(x) for x in v)):
        raise ConfigError(field, f"expected a pair of numbers, got {v!r}")
    return (float(v[0]), float(v[1]))


def _num_list(min_len=1):
    def check(field, v):
        if not isinstance(v, list) or len(v) < min_len:
            raise ConfigError(field, f"expected a list of >= {min_len} numbers")
        if not all(_is_num(x) for x in v):
            raise ConfigError(field, "entries must be numbers")
        return [float(x) for x in v]
    return check


def _schedule(field, v):
    """A noise intensity: constant c, or {coeff, power}."""
    if _is_num(v):
        return constant_schedule(float(v))
    if isinstance(v, dict):
        extra = set(v) - {"coeff", "power"}
        if extra:
            raise ConfigError(f"{field}.{sorted(extra)[0]}", "unknown field")
        if "coeff" not in v:
            raise ConfigError(f"{field}.coeff", "required")
        coeff = _f()(f"{field}.coeff", v["coeff"])
        power = _f()(f"{field}.power", v.get("power", 0.0))
        return Schedule(coeff=coeff, power=power)
    raise ConfigError(field, f"expected a number or {{coeff, power}}, got {v!r}")


def _validate(cfg: dict, schema: dict, sub: str) -> dict:
    """Strict validation: unknown keys rejected, defaults applied."""
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be a JSON object")
    known = set(schema) | {"out_dir", "threads", "seed"}
    for key in cfg:
        if key not in known:
            raise ConfigError(key, f"unknown field for subcommand '{sub}'")
    out = {}
    for key, (checker, default) in schema.items():
        if key in cfg and cfg[key] is not None:
            out[key] = checker(key, cfg[key])
        elif default is _REQUIRED:
            raise ConfigError(key, "required")
        else:
            out[key] = default
    return out


# ------------------------------------------------------------- output IO

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    x = float(v)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _write_csv(path: Path, schema_name: str, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# schema {schema_name}/1\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path: Path, doc: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(out: Path, sub: str, cfg: dict, threads: int):
    doc = {"artifact": "autores", "version": __version__,
           "subcommand": sub, "threads": threads, "out_dir": str(out),
           "config": cfg}
    _write_json(out / "manifest.json", doc)


def _traj_csv(path: Path, schema_name: str, header, traj: Trajectory):
    rows = ((t, *row) for t, row in zip(traj.times, traj.states))
    _write_csv(path, schema_name, header, rows)


# ------------------------------------------------------------ subcommands

_SCHEMAS = {
    "series": {
        "gamma": (_f(0.0, 1.0, lo_open=True, hi_open=True), _REQUIRED),
        "lam": (_f(0.0, lo_open=True), _REQUIRED),
        "order": (_i(0, 64), 3),
        "branch": (_s("stable", "unstable"), "stable"),
        "tau_min": (_f(0.0, lo_open=True), None),
        "tau_max": (_f(0.0, lo_open=True), None),
        "tau_n": (_i(2), None),
    },
    "simulate": {
        "gamma": (_f(0.0, 1.0, lo_open=True, hi_open=True), _REQUIRED),
        "lam": (_f(0.0, lo_open=True), _REQUIRED),
        "r0": (_f(), _REQUIRED),
        "psi0": (_f(), _REQUIRED),
        "tau0": (_f(0.0), 0.0),
        "tau1": (_f(0.0, lo_open=True), _REQUIRED),
        "samples": (_i(2, 10_000_000), 2000),
        "tol": (_f(0.0, lo_open=True), 1e-10),
    },
    "ensemble": {
        "gamma": (_f(0.0, 1.0, lo_open=True, hi_open=True), _REQUIRED),
        "lam": (_f(0.0, lo_open=True), _REQUIRED),
        "mu": (_f(0.0, 1.0, lo_open=True, hi_open=True), _REQUIRED),
        "sigma1": (_schedule, constant_schedule(0.0)),
        "sigma2": (_schedule, constant_schedule(1.0)),
        "h": (_f(0.0, lo_open=True), 1.0),
        "tau0": (_f(0.0), _REQUIRED),
        "horizon": (_f(0.0, lo_open=True), _REQUIRED),
        "dt": (_f(0.0, lo_open=True), None),
        "n_paths": (_i(100, 10_000_000), 500),
        "master_seed": (_i(0), 12345),
        "x0": (_pair, None),
        "ball_radius": (_f(0.0), 0.0),
        "eps1": (_f(0.0, lo_open=True), 0.1),
        "reference": (_b, False),
        "out_of_class_ok": (_b, False),
    },
    "exit-times": {
        "gamma": (_f(0.0, 1.0, lo_open=True, hi_open=True), _REQUIRED),
        "lam": (_f(0.0, lo_open=True), _REQUIRED),
        "mus": (_num_list(3), _REQUIRED),
        "sigma1": (_schedule, constant_schedule(0.0)),
        "sigma2": (_schedule, constant_schedule(1.0)),
        "h": (_f(0.0, lo_open=True), 1.0),
        "tau0": (_f(0.0), _REQUIRED),
        "horizon": (_f(0.0, lo_open=True), _REQUIRED),
        "dt": (_f(0.0, lo_open=True), None),
        "n_paths": (_i(100, 10_000_000), 300),
        "master_seed": (_i(0), 12345),
        "x0": (_pair, None),
        "ball_radius": (_f(0.0), 0.0),
        "eps1": (_f(0.0, lo_open=True), _REQUIRED),
        "n_boot": (_i(10, 1_000_000), 1000),
        "boot_seed": (_i(0), 54321),
    },
    "certify": {
        "gamma": (_f(0.0, 1.0, lo_open=True, hi_open=True), _REQUIRED),
        "lam": (_f(0.0, lo_open=True), _REQUIRED),
        "d_lo": (_f(0.0, lo_open=True), 1e-3),
        "d_hi": (_f(0.0, lo_open=True), 0.3),
        "tau_lo": (_f(0.0, lo_open=True), 10.0),
        "tau_hi": (_f(0.0, lo_open=True), 50.0),
        "grid": (_i(32, 4096), 32),
        "q": (_f(0.0, lo_open=True), None),
        "spot_checks": (_i(0, 100_000_000), 10000),
        "spot_seed": (_i(0), 777),
    },
    "thresholds": {
        "N": (_i(1, 64), 1),
        "kappa": (_f(0.0, 1.0, lo_open=True, hi_open=True), _REQUIRED),
        "h": (_f(0.0, lo_open=True), _REQUIRED),
        "n": (_i(1), _REQUIRED),
        "A": (_f(0.0, lo_open=True), _REQUIRED),
        "a": (_f(0.0), _REQUIRED),
        "C": (_f(0.0, lo_open=True), _REQUIRED),
        "eps1": (_f(0.0, lo_open=True), _REQUIRED),
        "eps2": (_f(0.0, lo_open=True), _REQUIRED),
        "beta": (_f(0.0, lo_open=True), None),
        "chain_B": (_f(0.0, lo_open=True), None),
        "chain_q": (_f(0.0, lo_open=True), None),
        "chain_depth": (_i(1, 64), 3),
    },
    "pendulum": {
        "eps": (_f(0.0, 1.0, lo_open=True, hi_open=True), _REQUIRED),
        "gamma": (_f(0.0, 1.0, lo_open=True, hi_open=True), 0.1),
        "lam": (_f(0.0, lo_open=True), 1.0),
        "r0": (_f(0.0, lo_open=True), _REQUIRED),
        "psi0": (_f(), _REQUIRED),
        "tau_end": (_f(0.0, lo_open=True), 32.0),
        "samples": (_i(100, 10_000_000), 4000),
        "tol": (_f(0.0, lo_open=True), 1e-10),
        "window": (_pair, None),
        "transient_fraction": (_f(0.0, 0.5), 0.1),
    },
    "figures": {
        "which": (_s("fig1", "fig2"), _REQUIRED),
        "master_seed": (_i(0), 12345),
        "horizon": (_f(0.0, lo_open=True), 60.0),
        "dt": (_f(0.0, lo_open=True), 1e-3),
        "record_every": (_i(1), 10),
    },
}

# the --seed flag (and the "seed" config alias) maps to this field
_SEED_FIELD = {"ensemble": "master_seed", "exit-times": "master_seed",
               "certify": "spot_seed", "figures": "master_seed"}


def _cmd_series(cfg: dict, out: Path, threads: int):
    p = SystemParams(lam=cfg["lam"], gamma=cfg["gamma"])
    e = expand(p, cfg["branch"], cfg["order"])
    _write_json(out / "coefficients.json", e.to_dict(p))
    grid_fields = [cfg["tau_min"], cfg["tau_max"], cfg["tau_n"]]
    if any(v is not None for v in grid_fields):
        if any(v is None for v in grid_fields):
            raise ConfigError("tau_min", "tau_min, tau_max, tau_n go together")
        if cfg["tau_max"] <= cfg["tau_min"]:
            raise ConfigError("tau_max", "must exceed tau_min")
        tau = np.geomspace(cfg["tau_min"], cfg["tau_max"], cfg["tau_n"])
        r, psi = evaluate(e, p, tau)
        _write_csv(out / "series.csv", "autores.series", ("tau", "r", "psi"),
                   zip(tau, r, psi))


def _cmd_simulate(cfg: dict, out: Path, threads: int):
    p = SystemParams(lam=cfg["lam"], gamma=cfg["gamma"])
    t_eval = np.linspace(cfg["tau0"], cfg["tau1"], cfg["samples"])
    traj = integrate_ode(lambda t, y: rhs_primary(y, t, p),
                         [cfg["r0"], cfg["psi0"]], cfg["tau0"], cfg["tau1"],
                         tol=cfg["tol"], t_eval=t_eval)
    _traj_csv(out / "trajectory.csv", "autores.trajectory",
              ("tau", "r", "psi"), traj)
    _write_json(out / "summary.json", {
        "verdict": classify_capture(traj, p),
        "end_state": [float(traj.states[-1, 0]), float(traj.states[-1, 1])],
        "truncated": traj.truncated,
    })


def _ensemble_config(cfg: dict, need_ref: bool):
    p = SystemParams(lam=cfg["lam"], gamma=cfg["gamma"])
    ref = reference_solution(p) if (need_ref or cfg.get("reference")) else None
    x0 = cfg["x0"]
    if x0 is None:
        if ref is None:
            raise ConfigError("x0", "required unless reference is true")
        x0 = tuple(float(v) for v in ref.state(cfg["tau0"]))
    mu0 = cfg["mu"] if "mu" in cfg else min(cfg["mus"])
    dt = cfg["dt"] if cfg["dt"] is not None else default_dt(mu0)

    def make(mu: float) -> EnsembleConfig:
        noise = NoiseSchedule(mu=mu, sigma1=cfg["sigma1"],
                              sigma2=cfg["sigma2"], h=cfg["h"])
        return EnsembleConfig(params=p, noise=noise, tau0=cfg["tau0"],
                              horizon=cfg["horizon"], dt=dt,
                              n_paths=cfg["n_paths"],
                              master_seed=cfg["master_seed"], x0=x0,
                              ball_radius=cfg["ball_radius"],
                              eps1=cfg["eps1"])
    return p, ref, make


def _cmd_ensemble(cfg: dict, out: Path, threads: int):
    p, ref, make = _ensemble_config(cfg, need_ref=False)
    stats = run_ensemble(make(cfg["mu"]), ref=ref, threads=threads,
                         out_of_class_ok=cfg["out_of_class_ok"])
    rows = zip(range(stats.n_paths), stats.exit_times, stats.censored,
               stats.captured, stats.sup_psi_dev, stats.sup_r_dev_weighted,
               stats.sup_r_dev_raw, stats.end_states[:, 0],
               stats.end_states[:, 1])
    _write_csv(out / "ensemble.csv", "autores.ensemble",
               ("path", "exit_time", "censored", "captured", "sup_dev_psi",
                "sup_dev_r_weighted", "sup_dev_r_raw", "r_end", "psi_end"),
               rows)
    _write_json(out / "summary.json", stats.to_dict())


def _cmd_exit_times(cfg: dict, out: Path, threads: int):
    p, ref, make = _ensemble_config(cfg, need_ref=True)
    mus = cfg["mus"]
    if len(set(mus)) != len(mus):
        raise ConfigError("mus", "amplitudes must be distinct")
    if not all(0.0 < m < 1.0 for m in mus):
        raise ConfigError("mus", "amplitudes must lie in (0, 1)")
    result = exit_time_scaling([make(m) for m in mus], ref, threads=threads,
                               n_boot=cfg["n_boot"], seed=cfg["boot_seed"])
    _write_csv(out / "exit_times.csv", "autores.exit_times",
               ("mu", "median_exit", "lo", "hi"),
               ((m, med, iv[0], iv[1])
                for m, med, iv in zip(result["mus"], result["medians"],
                                      result["median_intervals"])))
    _write_json(out / "scaling.json", result)


def _cmd_certify(cfg: dict, out: Path, threads: int):
    p = SystemParams(lam=cfg["lam"], gamma=cfg["gamma"])
    ref = reference_solution(p)
    res = certify(p, ref, d_range=(cfg["d_lo"], cfg["d_hi"]),
                  tau_range=(cfg["tau_lo"], cfg["tau_hi"]),
                  grid=cfg["grid"], q=cfg["q"])
    if isinstance(res, NoCertificate):
        _write_json(out / "certificate.json", {
            "found": False, "reason": res.reason, "tau": res.tau,
            "R": res.R, "Psi": res.Psi,
        })
        return
    doc = {"found": True}
    doc.update(res.to_dict())
    if cfg["spot_checks"] > 0:
        violations = spot_check(res, p, ref, n=cfg["spot_checks"],
                                seed=cfg["spot_seed"])
        doc["spot_checks"] = {"n": cfg["spot_checks"],
                              "seed": cfg["spot_seed"],
                              "violations": violations}
    _write_json(out / "certificate.json", doc)


def _cmd_thresholds(cfg: dict, out: Path, threads: int):
    rep = thresholds(N=cfg["N"], kappa=cfg["kappa"], h=cfg["h"], n=cfg["n"],
                     A=cfg["A"], a=cfg["a"], C=cfg["C"],
                     eps1=cfg["eps1"], eps2=cfg["eps2"])
    doc = rep.to_dict()
    if cfg["beta"] is not None:
        doc["beta"] = cfg["beta"]
        doc["beta_horizon_exponent"] = thresholds_beta(cfg["beta"],
                                                       cfg["kappa"])
    if cfg["chain_B"] is not None and cfg["chain_q"] is not None:
        doc["chain_a"] = [chain_a(k, cfg["n"], cfg["h"], cfg["chain_B"],
                                  cfg["C"], cfg["chain_q"])
                          for k in range(1, cfg["chain_depth"] + 1)]
    _write_json(out / "thresholds.json", doc)


def _cmd_pendulum(cfg: dict, out: Path, threads: int):
    p = SystemParams(lam=cfg["lam"], gamma=cfg["gamma"])
    pp = inverse_map(p, cfg["eps"])
    tau_end = cfg["tau_end"]
    t_eval = np.linspace(0.0, tau_end, cfg["samples"])
    avg = integrate_ode(lambda t, y: rhs_primary(y, t, p),
                        [cfg["r0"], cfg["psi0"]], 0.0, tau_end,
                        tol=cfg["tol"], t_eval=t_eval)
    u0, v0 = seed_from_averaged(cfg["r0"], cfg["psi0"], cfg["eps"])
    traj = integrate_pendulum(pp, u0, v0, 2.0 * tau_end / cfg["eps"],
                              tol=cfg["tol"])
    _traj_csv(out / "pendulum.csv", "autores.pendulum", ("t", "u", "v"), traj)
    m = envelope_compare(traj, avg, pp,
                         transient_fraction=cfg["transient_fraction"],
                         window=cfg["window"])
    rel = np.abs(m["envelope"] - m["predicted"]) / m["predicted"]
    _write_csv(out / "comparison.csv", "autores.envelope",
               ("tau", "envelope", "predicted", "relerr"),
               zip(m["tau"], m["envelope"], m["predicted"], rel))
    _write_json(out / "metrics.json", {
        "alpha": pp.alpha, "theta": pp.theta, "eps": pp.eps,
        "max_rel_err": m["max_rel_err"], "mean_rel_err": m["mean_rel_err"],
        "n_extrema": m["n_extrema"], "window": list(m["window"]),
    })


def _cmd_figures(cfg: dict, out: Path, threads: int):
    p = SystemParams(lam=1.0, gamma=0.1)
    if cfg["which"] == "fig1":
        # documented spread of deterministic initial points
        index = []
        horizon = cfg["horizon"]
        t_eval = np.linspace(0.0, horizon, 2400)
        for i, r0 in enumerate(np.arange(0.25, 2.01, 0.25)):
            for j, psi0 in enumerate((0.0, math.pi / 2, math.pi,
                                      3 * math.pi / 2)):
                traj = integrate_ode(lambda t, y: rhs_primary(y, t, p),
                                     [r0, psi0], 0.0, horizon,
                                     tol=1e-10, t_eval=t_eval)
                name = f"fig1_r{i}_p{j}.csv"
                _traj_csv(out / name, "autores.trajectory",
                          ("tau", "r", "psi"), traj)
                index.append({"file": name, "r0": float(r0),
                              "psi0": float(psi0),
                              "verdict": classify_capture(traj, p)})
        _write_json(out / "index.json", {"figure": "fig1", "runs": index})
        return
    # fig2: one sample path per noise amplitude from a fixed start
    index = []
    for k, mu in enumerate((0.1, 0.35, 0.55)):
        noise = NoiseSchedule(mu=mu, sigma1=constant_schedule(0.0),
                              sigma2=constant_schedule(1.0), h=1.0)
        stream = NoiseStream(cfg["master_seed"], k)
        traj = integrate_sde(
            lambda t, y: drift_perturbed(y, t, p, noise),
            lambda t, y: diffusion_matrix(y, t, noise),
            [1.09, 2.15], 0.0, cfg["horizon"], cfg["dt"], mu, stream,
            record_every=cfg["record_every"])
        name = f"fig2_mu{mu:.2f}.csv"
        _traj_csv(out / name, "autores.trajectory", ("tau", "r", "psi"), traj)
        index.append({"file": name, "mu": mu,
                      "verdict": classify_capture_noisy(traj, p)})
    _write_json(out / "index.json", {"figure": "fig2", "runs": index})


_HANDLERS = {"series": _cmd_series, "simulate": _cmd_simulate,
             "ensemble": _cmd_ensemble, "exit-times": _cmd_exit_times,
             "certify": _cmd_certify, "thresholds": _cmd_thresholds,
             "pendulum": _cmd_pendulum, "figures": _cmd_figures}


# ---------------------------------------------------------------- driver

def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError("config", f"no such file: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}")


def _resolve(sub: str, args) -> tuple:
    """Merge config file and flags into a validated config document."""
    raw = _load_json(args.config) if args.config else {}
    if isinstance(raw, dict) and "subcommand" in raw and "config" in raw:
        # a manifest from a previous run reproduces that run
        if raw["subcommand"] != sub:
            raise ConfigError("subcommand",
                              f"manifest is for '{raw['subcommand']}'")
        threads = raw.get("threads", 1)
        out_dir = raw.get("out_dir")
        raw = raw["config"]
        raw.setdefault("threads", threads)
        if out_dir is not None:
            raw.setdefault("out_dir", out_dir)
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a JSON object")
    raw = dict(raw)

    seed_field = _SEED_FIELD.get(sub)
    if "seed" in raw:
        if seed_field is None:
            raise ConfigError("seed", f"subcommand '{sub}' is deterministic")
        if seed_field in raw:
            raise ConfigError("seed", f"give either seed or {seed_field}")
        raw[seed_field] = raw.pop("seed")
    if args.seed is not None:
        if seed_field is None:
            raise ConfigError("seed", f"subcommand '{sub}' is deterministic")
        raw[seed_field] = args.seed

    threads = raw.pop("threads", 1)
    if args.threads is not None:
        threads = args.threads
    if isinstance(threads, bool) or not isinstance(threads, int) or threads < 1:
        raise ConfigError("threads", f"expected a positive integer, got {threads!r}")

    out_dir = raw.pop("out_dir", None)
    if args.out is not None:
        out_dir = args.out
    if out_dir is None:
        raise ConfigError("out_dir", "required (config field or --out)")
    if getattr(args, "which", None) is not None:
        raw["which"] = args.which

    cfg = _validate(raw, _SCHEMAS[sub], sub)
    return cfg, Path(out_dir), int(threads)


def _manifest_echo(cfg: dict) -> dict:
    """JSON-serializable copy of the resolved config."""
    doc = {}
    for key, val in cfg.items():
        if isinstance(val, Schedule):
            doc[key] = {"coeff": val.coeff, "power": val.power}
        elif isinstance(val, tuple):
            doc[key] = list(val)
        else:
            doc[key] = val
    return doc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="autores",
        description="Capture-into-resonance laboratory: simulation, "
                    "certification and Monte Carlo experiments.")
    parser.add_argument("--version", action="version",
                        version=f"autores {__version__}")
    subs = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = subs.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", help="JSON config (a manifest.json works)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, help="seed override")
        sp.add_argument("--threads", type=int, help="worker thread cap")
        if name == "figures":
            sp.add_argument("--which", choices=("fig1", "fig2"))
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    sub = args.subcommand
    try:
        cfg, out, threads = _resolve(sub, args)
    except ConfigError as exc:
        print(f"autores {sub}: config error: {exc}", file=sys.stderr)
        return 2
    try:
        out.mkdir(parents=True, exist_ok=True)
        _HANDLERS[sub](cfg, out, threads)
        _write_manifest(out, sub, _manifest_echo(cfg), threads)
    except ConfigError as exc:
        print(f"autores {sub}: config error: {exc}", file=sys.stderr)
        return 2
    except IntegrationError as exc:
        # the message already carries the tau location
        print(f"autores {sub}: runtime error [autores.integrators]: {exc}",
              file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError, NotImplementedError) as exc:
        print(f"autores {sub}: runtime error [{_origin(exc, sub)}]: {exc}",
              file=sys.stderr)
        return 1
    return 0


def _origin(exc: BaseException, sub: str) -> str:
    """Innermost package module on the traceback, for error attribution."""
    origin = f"autores.cli:{sub}"
    tb = exc.__traceback__
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith("autores"):
            origin = name
        tb = tb.tb_next
    return origin


if __name__ == "__main__":
    sys.exit(main())
