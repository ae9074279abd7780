"""Batch harness: job parsing, dispatch, and reproducible artifacts.

Jobs are single JSON objects with a ``schema_version``.  Every summary
echoes the fully resolved config (all defaults materialized), and re-running
that echoed config reproduces the numeric outputs bitwise: all randomness
flows from the job seed through the per-batch counter splitting rule, and
iteration orders are fixed.

Exit codes: 0 success / certification pass, 1 schema violation, 2
certification fail, 3 certification uncertified (center-value mode),
4 computation error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import certify as certify_mod
from . import curves as curves_mod
from . import statistics as stats_mod
from .errors import SchemaError, ThermoformalError
from .maps import builtin_maps, map_from_json, map_to_json
from .observables import observable_from_json
from .operator import build_matrix, equilibrium_measure, fourier_testfns, invariance_defect, leading_triple
from .parallel import worker_count

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_SCHEMA = 1
EXIT_CERTIFY_FAIL = 2
EXIT_UNCERTIFIED = 3
EXIT_COMPUTE = 4

COMMANDS = ("certify", "spectrum", "correlations", "clt",
            "free-energy", "rate-function", "ldp", "response")

_TOP_KEYS = {"schema_version", "command", "map", "potential", "observable",
             "observables", "params", "seed"}


def _require(cond, msg, path):
    if not cond:
        raise SchemaError(msg, path)


def _check_keys(obj, allowed, path):
    _require(isinstance(obj, dict), "expected an object", path)
    for key in obj:
        if key not in allowed:
            raise SchemaError(f"unknown key {key!r}", f"{path}.{key}" if path else key)


def _get_params(config, defaults, path="params"):
    params = dict(config.get("params", {}))
    _check_keys(params, set(defaults), path)
    resolved = dict(defaults)
    resolved.update(params)
    return resolved


def _num(params, key, lo=None, hi=None, integer=False, path="params"):
    val = params[key]
    _require(isinstance(val, (int, float)) and not isinstance(val, bool),
             f"{key} must be a number", f"{path}.{key}")
    if integer:
        _require(float(val).is_integer(), f"{key} must be an integer", f"{path}.{key}")
        val = int(val)
    if lo is not None:
        _require(val >= lo, f"{key} must be >= {lo}", f"{path}.{key}")
    if hi is not None:
        _require(val <= hi, f"{key} must be <= {hi}", f"{path}.{key}")
    return val


def validate(config):
    """Validate a job config and return it with all defaults materialized."""
    _check_keys(config, _TOP_KEYS, "")
    _require(config.get("schema_version") == SCHEMA_VERSION,
             f"schema_version must be {SCHEMA_VERSION}", "schema_version")
    command = config.get("command")
    _require(command in COMMANDS, f"command must be one of {COMMANDS}", "command")

    resolved = {"schema_version": SCHEMA_VERSION, "command": command,
                "seed": _num({"seed": config.get("seed", 0)}, "seed", integer=True, path="")}

    if command == "response":
        fam = config.get("map", {"kind": "builtin", "name": "derived_expanding"})
        _check_keys(fam, {"kind", "name", "degree", "params"}, "map")
        _require(fam.get("kind", "builtin") == "builtin" and
                 fam.get("name") in builtin_maps(),
                 "response requires a builtin family name", "map.name")
        resolved["map"] = {"kind": "builtin", "name": fam["name"],
                           "params": dict(fam.get("params", {}))}
    else:
        m = map_from_json(config.get("map", {"kind": "builtin", "name": "doubling"}))
        resolved["map"] = map_to_json(m)

    potential = config.get("potential", {"kind": "constant", "params": {"value": 0.0}})
    resolved["potential"] = potential

    defaults = {
        "certify": {"N": 1, "gamma": 0.6, "resolution": 256, "mode": "C", "rho": None},
        "spectrum": {"scheme": "ulam", "n": 1024},
        "correlations": {"scheme": "ulam", "n": 1024, "n_max": 32},
        "clt": {"scheme": "ulam", "n": 1024, "lag_max": 64,
                "orbit_n": 50, "samples": 100_000},
        "free-energy": {"scheme": "collocation", "n": 512, "t_max": 0.5,
                        "steps": 41, "eps_guard": None,
                        "mc_t_values": [], "mc_orbit_n": 30, "mc_samples": 100_000},
        "rate-function": {"scheme": "collocation", "n": 512, "t_max": 0.5,
                          "steps": 41, "s_steps": 101},
        "ldp": {"scheme": "collocation", "n": 512, "t_max": 2.0, "steps": 81,
                "s_steps": 201, "a": 0.3, "b": 0.5,
                "n_list": [20, 40, 80], "samples": 1_000_000},
        "response": {"scheme": "collocation", "n": 512, "v_min": 0.5,
                     "v_max": 1.5, "v_count": 33, "guard_N": 1,
                     "guard_gamma": 0.7, "guard_resolution": 512},
    }
    params = _get_params(config, defaults[command])
    resolved["params"] = params

    need_one = {"clt", "free-energy", "rate-function", "ldp", "response"}
    if command in need_one:
        resolved["observable"] = config.get(
            "observable", {"kind": "fourier_cos", "params": {"k": 1, "amplitude": 1.0}})
    if command == "correlations":
        obs = config.get("observables",
                         {"g": {"kind": "fourier_cos", "params": {"k": 1, "amplitude": 1.0}},
                          "psi": {"kind": "fourier_cos", "params": {"k": 1, "amplitude": 1.0}}})
        _check_keys(obs, {"g", "psi"}, "observables")
        _require("g" in obs and "psi" in obs, "need observables.g and observables.psi",
                 "observables")
        resolved["observables"] = obs

    _validate_params(command, params)
    return resolved


def _validate_params(command, params):
    p = params
    if command == "certify":
        _num(p, "N", lo=1, integer=True)
        gamma = _num(p, "gamma")
        _require(0.0 < gamma < 1.0, "gamma must lie in (0,1)", "params.gamma")
        _num(p, "resolution", lo=16, integer=True)
        _require(p["mode"] in ("C", "Cprime"), "mode must be C or Cprime", "params.mode")
        if p["rho"] is not None:
            _num(p, "rho", lo=0.0)
    elif command in ("spectrum", "correlations", "clt", "free-energy",
                     "rate-function", "ldp", "response"):
        _require(p["scheme"] in ("ulam", "collocation"),
                 "scheme must be ulam or collocation", "params.scheme")
        _num(p, "n", lo=16, integer=True)
        if command == "correlations":
            _num(p, "n_max", lo=1, integer=True)
        if command == "clt":
            _num(p, "lag_max", lo=1, integer=True)
            _num(p, "orbit_n", lo=1, integer=True)
            _num(p, "samples", lo=10, integer=True)
        if command in ("free-energy", "rate-function", "ldp"):
            _num(p, "t_max", lo=1e-9)
            steps = _num(p, "steps", lo=3, integer=True)
            _require(steps % 2 == 1, "steps must be odd", "params.steps")
        if command in ("rate-function", "ldp"):
            _num(p, "s_steps", lo=3, integer=True)
        if command == "ldp":
            _require(isinstance(p["n_list"], list) and len(p["n_list"]) >= 1,
                     "n_list must be a nonempty list", "params.n_list")
            _num(p, "samples", lo=10, integer=True)
            _require(p["a"] < p["b"], "need a < b", "params.a")
        if command == "response":
            _num(p, "v_count", lo=5, integer=True)
            _require(p["v_min"] < p["v_max"], "need v_min < v_max", "params.v_min")


# ---------------------------------------------------------------------------
# Command handlers (return (exit_code, results, csv_tables))
# ---------------------------------------------------------------------------

def _handler_certify(cfg):
    m = map_from_json(cfg["map"])
    p = cfg["params"]
    fn = certify_mod.check_condition_C if p["mode"] == "C" else certify_mod.check_condition_Cprime
    rep = fn(m, p["N"], p["gamma"], p["resolution"], rho=p["rho"])
    results = {
        "passed": rep.passed,
        "mode": rep.mode,
        "rho": rep.rho if math.isfinite(rep.rho) else None,
        "worst_bound": float(rep.bound.max()),
        "failure_cells": [int(i) for i in rep.failures[:64]],
        "failure_count": int(rep.failures.size),
    }
    table = ("certify", ["cell", "raw_bound", "bound", "witness_branch", "witness_preimage"],
             [(i, rep.raw_bound[i], rep.bound[i], int(rep.witness_branch[i]),
               rep.witness_preimage[i]) for i in range(rep.resolution)])
    if not rep.passed:
        code = EXIT_CERTIFY_FAIL
    elif rep.mode == certify_mod.MODE_CENTER_ONLY:
        code = EXIT_UNCERTIFIED
    else:
        code = EXIT_OK
    return code, results, [table]


def _spectral_objects(cfg):
    m = map_from_json(cfg["map"])
    phi = observable_from_json(cfg["potential"], m, "potential")
    tm = build_matrix(m, phi, cfg["params"]["scheme"], cfg["params"]["n"])
    triple = leading_triple(tm)
    return m, phi, triple


def _handler_spectrum(cfg):
    m, phi, triple = _spectral_objects(cfg)
    state = equilibrium_measure(triple)
    results = {
        "lambda": triple.lam,
        "pressure": triple.pressure,
        "gap_ratio": triple.gap_ratio,
        "primitive": triple.primitive,
        "iterations": triple.iterations,
        "invariance_defect_fourier5": invariance_defect(m, state, fourier_testfns(5)),
    }
    table = ("spectrum", ["x", "h", "nu", "mu"],
             list(zip(triple.grid, triple.h, triple.nu, state.mu)))
    return EXIT_OK, results, [table]


def _handler_correlations(cfg):
    m, phi, triple = _spectral_objects(cfg)
    state = equilibrium_measure(triple)
    g = observable_from_json(cfg["observables"]["g"], m, "observables.g")
    psi = observable_from_json(cfg["observables"]["psi"], m, "observables.psi")
    series = stats_mod.correlations(m, state, g.fn, psi.fn, cfg["params"]["n_max"])
    results = {
        "tau_hat": series.tau_hat,
        "prefactor": series.prefactor,
        "C0": float(series.values[0]),
        "gap_ratio": triple.gap_ratio,
    }
    table = ("correlations", ["lag", "C"],
             list(zip(series.lags.tolist(), series.values.tolist())))
    return EXIT_OK, results, [table]


def _handler_clt(cfg):
    m, phi, triple = _spectral_objects(cfg)
    state = equilibrium_measure(triple)
    psi = observable_from_json(cfg["observable"], m, "observable")
    p = cfg["params"]
    var = stats_mod.clt_variance(m, triple, psi.fn, p["lag_max"])
    results = {
        "sigma2": var.sigma2,
        "tail_bound": var.tail_bound,
        "coboundary": var.coboundary,
        "mean": var.mean,
    }
    tables = []
    if var.coboundary:
        results["ks_statistic"] = None
        results["refused"] = "coboundary: sigma^2 flagged zero, CLT normalization degenerate"
    else:
        rep = stats_mod.clt_empirical(m, state, psi.fn, p["orbit_n"], p["samples"],
                                      cfg["seed"], variance=var)
        results["ks_statistic"] = rep.ks_statistic
        tables.append(("clt_qq", ["level", "sample_quantile", "gaussian_quantile"],
                       [tuple(row) for row in rep.quantiles]))
    return EXIT_OK, results, tables


def _curve_from_cfg(cfg, keep_triples=False):
    m = map_from_json(cfg["map"])
    phi = observable_from_json(cfg["potential"], m, "potential")
    psi = observable_from_json(cfg["observable"], m, "observable")
    p = cfg["params"]
    curve = curves_mod.free_energy_curve(
        m, phi, psi, p["t_max"], p["steps"], scheme=p["scheme"], n=p["n"],
        eps_guard=p.get("eps_guard"), keep_triples=keep_triples,
        workers=worker_count())
    return m, phi, psi, curve


def _handler_free_energy(cfg):
    m, phi, psi, curve = _curve_from_cfg(cfg, keep_triples=True)
    p = cfg["params"]
    results = {
        "verdict": curve.verdict,
        "E_at_tmax": float(curve.E[-1]),
        "admissible_at_endpoints": curve.admissible_at_endpoints,
    }
    if p["mc_t_values"]:
        i0 = int(np.flatnonzero(curve.t == 0.0)[0])
        state = equilibrium_measure(curve.triples[i0])
        mc = {}
        for t in p["mc_t_values"]:
            val = curves_mod.free_energy_mc(m, state, psi.fn, float(t),
                                            p["mc_orbit_n"], p["mc_samples"], cfg["seed"])
            i = int(np.argmin(np.abs(curve.t - float(t))))
            mc[str(t)] = {"mc": val, "spectral": float(curve.E[i]),
                          "gap": abs(val - float(curve.E[i]))}
        results["mc_check"] = mc
    table = ("free_energy", ["t", "E", "E1", "E2"],
             list(zip(curve.t.tolist(), curve.E.tolist(), curve.E1.tolist(),
                      [x if not math.isnan(x) else "" for x in curve.E2.tolist()])))
    return EXIT_OK, results, [table]


def _handler_rate_function(cfg):
    m, phi, psi, curve = _curve_from_cfg(cfg)
    rate = curves_mod.rate_function(curve, cfg["params"]["s_steps"])
    results = {
        "verdict": curve.verdict,
        "s_star": rate.s_star,
        "I_at_s_star": curves_mod.legendre_value(curve, rate.s_star)[0],
        "eq5_residual": rate.eq5_residual,
    }
    table = ("rate_function", ["s", "I", "t_of_s"],
             list(zip(rate.s.tolist(), rate.I.tolist(), rate.t_of_s.tolist())))
    return EXIT_OK, results, [table]


def _handler_ldp(cfg):
    m, phi, psi, curve = _curve_from_cfg(cfg, keep_triples=True)
    p = cfg["params"]
    rate = curves_mod.rate_function(curve, p["s_steps"])
    i0 = int(np.flatnonzero(curve.t == 0.0)[0])
    state = equilibrium_measure(curve.triples[i0])
    rep = curves_mod.ldp_empirical(m, state, psi.fn, p["a"], p["b"],
                                   [int(x) for x in p["n_list"]],
                                   p["samples"], cfg["seed"], rate)
    results = {
        "extrapolated_rate": rep.extrapolated,
        "rate_bound": rep.rate_bound,
        "gap": rep.gap,
        "censored": rep.censored,
        "counts": rep.counts.tolist(),
    }
    table = ("ldp", ["n", "count", "rate"],
             list(zip(rep.n_values.tolist(), rep.counts.tolist(), rep.rates.tolist())))
    return EXIT_OK, results, [table]


def _handler_response(cfg):
    p = cfg["params"]
    name = cfg["map"]["name"]
    base_params = dict(cfg["map"].get("params", {}))
    ctor = builtin_maps()[name]

    if name == "derived_expanding":
        family = lambda v: ctor(v=v)
    else:
        fixed = ctor(**base_params)
        family = lambda v: fixed
    obs = observable_from_json(cfg["observable"], None, "observable")
    phi_cfg = cfg["potential"]
    if phi_cfg.get("kind") in ("neg_log_deriv", "coboundary"):
        phi = lambda mv: observable_from_json(phi_cfg, mv, "potential")
    else:
        phi = observable_from_json(phi_cfg, None, "potential")
    vs = np.linspace(p["v_min"], p["v_max"], p["v_count"])
    scan = curves_mod.response_scan(
        family, phi, obs.fn, vs, scheme=p["scheme"], n=p["n"],
        guard=(p["guard_N"], p["guard_gamma"], p["guard_resolution"]),
        workers=worker_count())
    results = {
        "max_adjacent_lambda_jump": float(np.max(np.abs(np.diff(scan.lam)))),
        "richardson_first": scan.richardson_first,
        "richardson_second": scan.richardson_second,
        "guard_all_passed": bool(scan.guard_passed.all()),
    }
    table = ("response", ["v", "lambda", "pressure", "mean_obs", "dlambda"],
             list(zip(scan.v.tolist(), scan.lam.tolist(), scan.pressure.tolist(),
                      scan.mean_obs.tolist(), scan.dlam.tolist())))
    return EXIT_OK, results, [table]


_HANDLERS = {
    "certify": _handler_certify,
    "spectrum": _handler_spectrum,
    "correlations": _handler_correlations,
    "clt": _handler_clt,
    "free-energy": _handler_free_energy,
    "rate-function": _handler_rate_function,
    "ldp": _handler_ldp,
    "response": _handler_response,
}


def run(config, out_dir=None):
    """Validate and run a job; returns (exit_code, summary dict).

    Artifacts (summary.json plus per-command CSV tables) are written under
    ``out_dir`` when given.  The summary embeds the resolved config; feeding
    that back through ``run`` reproduces all numeric outputs bitwise.
    """
    resolved = validate(config)
    code, results, tables = _HANDLERS[resolved["command"]](resolved)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": resolved["command"],
        "exit_code": code,
        "resolved_config": resolved,
        "results": results,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(dumps_summary(summary) + "\n")
        for name, header, rows in tables:
            write_csv(out / f"{name}.csv", header, rows)
    return code, summary


def dumps_summary(summary):
    """Deterministic JSON text: sorted keys, repr-exact floats."""
    return json.dumps(summary, sort_keys=True, indent=2, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def write_csv(path, header, rows):
    """One-line header, fixed column order, repr-exact float formatting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="thermoformal",
        description="Thermodynamic-formalism numerics for circle maps")
    sub = parser.add_subparsers(dest="cli_command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="path to the JSON job config")
        sp.add_argument("--out", default=None, help="artifact directory")
    args = parser.parse_args(argv)

    try:
        config = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_SCHEMA

    try:
        if config.get("command") != args.cli_command:
            raise SchemaError(
                f"config command {config.get('command')!r} does not match "
                f"CLI subcommand {args.cli_command!r}", "command")
        code, summary = run(config, args.out)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except ThermoformalError as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(payload), file=sys.stderr)
        return EXIT_COMPUTE
    print(dumps_summary(summary))
    return code


if __name__ == "__main__":
    sys.exit(main())
