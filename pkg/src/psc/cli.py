"""Command-line front end: ``psc estimate | simulate | sensitivity``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .data import parse_dataset
from .errors import ConfigError, PSCError
from .estimators import ESTIMATORS, estimate
from .inference import ARMS, BootstrapConfig, bootstrap_draws
from .pipeline import PipelineConfig, build_inputs, fit_nuisances
from .simulation import DgpConfig, McStudyConfig, run_mc_study
from .working_model import WorkingModelSpec

DEFAULTS = {
    "data": None,
    "rho": 0.0,
    "rho_grid": "0,0.2,0.5",
    "copula": "gaussian",
    "basis": "1,s1,s0",
    "weight": "uniform",
    "estimator": "all",
    "bootstrap": 500,
    "level": 0.95,
    "seed": 0,
    "grid_nodes": 48,
    "clamp": 0.01,
    "bandwidth_s": None,
    "bandwidth_x": None,
    "regime": 1,
    "n": 500,
    "reps": 500,
    "out": None,
    "format": None,
}
_INT_KEYS = {"bootstrap", "seed", "grid_nodes", "regime", "n", "reps"}
_FLOAT_KEYS = {"rho", "level", "clamp", "bandwidth_s", "bandwidth_x"}
ARM_LABELS = {1: "arm1", 0: "arm0", "tau": "tau"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="psc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        # every option defaults to None so a config file can fill the gaps
        p.add_argument("--config", help="flat 'key = value' file; flags override it")
        p.add_argument("--rho", type=float)
        p.add_argument("--copula")
        p.add_argument("--basis", help='comma-separated terms, e.g. "1,s1,s0,s1*s0"')
        p.add_argument("--weight", help="'uniform' or a CSV with columns s1,s0,w")
        p.add_argument("--estimator", choices=[*ESTIMATORS, "all"])
        p.add_argument("--seed", type=int)
        p.add_argument("--grid-nodes", type=int)
        p.add_argument("--clamp", type=float)
        p.add_argument("--bandwidth-s", type=float)
        p.add_argument("--bandwidth-x", type=float)
        p.add_argument("--out", help="output path (stdout if omitted)")
        p.add_argument("--format", choices=["json", "csv"])

    est = sub.add_parser("estimate", help="estimate projection coefficients for arms 1, 0 and tau")
    common(est)
    est.add_argument("--data")
    est.add_argument("--bootstrap", type=int, help="replicates B (0 disables the bootstrap)")
    est.add_argument("--level", type=float)

    sim = sub.add_parser("simulate", help="Monte Carlo bias/RMSE study")
    common(sim)
    sim.add_argument("--regime", type=int)
    sim.add_argument("--n", type=int)
    sim.add_argument("--reps", type=int)

    sens = sub.add_parser("sensitivity", help="tau coefficients over a grid of rho")
    common(sens)
    sens.add_argument("--data")
    sens.add_argument("--rho-grid")
    sens.add_argument("--bootstrap", type=int)
    sens.add_argument("--level", type=float)
    return parser


def read_config_file(path) -> dict:
    out = {}
    errors = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"{path}:{lineno}: expected 'key = value'")
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            errors.append(f"{path}:{lineno}: unknown key {key!r}")
            continue
        try:
            if key in _INT_KEYS:
                out[key] = int(value)
            elif key in _FLOAT_KEYS:
                out[key] = float(value)
            else:
                out[key] = value.strip("\"'")
        except ValueError:
            errors.append(f"{path}:{lineno}: {key} expects a number, got {value!r}")
    if errors:
        raise ConfigError("; ".join(errors))
    return out


def resolve_settings(ns: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS)
    if ns.config:
        settings.update(read_config_file(ns.config))
    for key, value in vars(ns).items():
        if key in settings and value is not None:
            settings[key] = value
    return settings


def _estimators(settings) -> tuple[str, ...]:
    return ESTIMATORS if settings["estimator"] == "all" else (settings["estimator"],)


def _rho_grid(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"rho grid must be comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ConfigError("rho grid is empty")
    return vals


def validate(command: str, settings: dict) -> dict:
    """Build all typed configs, collecting every problem into one error."""
    errors, built = [], {}

    def attempt(name, fn):
        try:
            built[name] = fn()
        except (ConfigError, ValueError) as exc:
            errors.append(str(exc))

    attempt("pipeline", lambda: PipelineConfig(
        rho=settings["rho"], copula=settings["copula"], basis=settings["basis"],
        weight=settings["weight"], nodes=settings["grid_nodes"], clamp=settings["clamp"],
        bandwidth_s=settings["bandwidth_s"], bandwidth_x=settings["bandwidth_x"]))
    if "pipeline" in built:
        attempt("working_model", lambda: WorkingModelSpec.parse(settings["basis"], settings["weight"]))
    if command in ("estimate", "sensitivity"):
        if not settings["data"]:
            errors.append("--data is required")
        B = settings["bootstrap"]
        if B is not None and B < 0:
            errors.append(f"bootstrap replicates must be >= 0, got {B}")
        elif B:
            attempt("bootstrap", lambda: BootstrapConfig(B, settings["seed"], settings["level"]))
        if not B and not 0.0 < settings["level"] < 1.0:
            errors.append(f"confidence level must lie in (0, 1), got {settings['level']}")
    if command == "sensitivity":
        attempt("rho_grid", lambda: _rho_grid(settings["rho_grid"]))
        for r in built.get("rho_grid", ()):
            if not -1.0 < r < 1.0:
                errors.append(f"rho grid value {r} outside (-1, 1)")
    if command == "simulate":
        attempt("dgp", lambda: DgpConfig(settings["regime"], settings["n"], settings["rho"],
                                         settings["seed"]))
        if "dgp" in built:
            attempt("study", lambda: McStudyConfig(
                built["dgp"], settings["reps"], _estimators(settings), settings["basis"],
                settings["grid_nodes"], clamp=settings["clamp"],
                bandwidth_s=settings["bandwidth_s"], bandwidth_x=settings["bandwidth_x"]))
    if errors:
        raise ConfigError("invalid configuration: " + "; ".join(dict.fromkeys(errors)))
    return built


def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _config_echo(settings: dict) -> dict:
    return {k: settings[k] for k in DEFAULTS if k not in ("out", "format")}


def run_estimate(settings: dict, built: dict) -> int:
    cfg = built["pipeline"]
    data = parse_dataset(settings["data"])
    estimators = _estimators(settings)
    echo = _config_echo(settings)
    results = {e: {} for e in estimators}
    failed = False
    boot = None
    try:
        nuis = fit_nuisances(data, cfg)
        inputs = build_inputs(data, nuis, cfg, built["working_model"])
    except PSCError as exc:
        failed = True
        for e in estimators:
            for a in ARMS:
                results[e][ARM_LABELS[a]] = {"error": f"{type(exc).__name__}: {exc}"}
        inputs = None
    if inputs is not None and "bootstrap" in built:
        boot = bootstrap_draws(data, cfg, built["bootstrap"], estimators, ARMS)
    if inputs is not None:
        for e in estimators:
            for a in ARMS:
                try:
                    rep = estimate(inputs, e, a, settings["level"])
                    if boot is not None:
                        ci, nfail = boot.summary((cfg.rho, e, a), settings["level"])
                        rep.ci, rep.level = ci, settings["level"]
                        if rep.vcov is None:
                            d = boot.draws[(cfg.rho, e, a)]
                            d = d[~np.isnan(d).any(axis=1)]
                            rep.vcov = np.atleast_2d(np.cov(d, rowvar=False, ddof=1))
                        rep.diagnostics = dict(rep.diagnostics, interval="percentile bootstrap",
                                               bootstrap_failures=nfail)
                    elif rep.ci is not None:
                        rep.diagnostics = dict(rep.diagnostics, interval="wald plug-in")
                    body = rep.to_dict()
                    body["diagnostics"] = dict(body["diagnostics"], config=echo)
                    results[e][ARM_LABELS[a]] = body
                except PSCError as exc:
                    failed = True
                    results[e][ARM_LABELS[a]] = {"error": f"{type(exc).__name__}: {exc}"}
    report = {"command": "estimate", "status": "failed" if failed else "ok",
              "config": echo, "results": results}
    if settings["format"] == "csv":
        _emit(_estimate_csv(results), settings["out"])
    else:
        _emit(json.dumps(_clean(report), indent=2) + "\n", settings["out"])
    return 1 if failed else 0


def _estimate_csv(results: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["estimator", "arm", "coefficient", "estimate", "se", "ci_lo", "ci_hi", "error"])
    for e, arms in results.items():
        for arm, body in arms.items():
            if "error" in body:
                w.writerow([e, arm, "", "", "", "", "", body["error"]])
                continue
            for name, val in body["eta_hat"].items():
                se = body["se"][name] if body["se"] else ""
                lo, hi = body["ci"][name] if body["ci"] else ("", "")
                w.writerow([e, arm, name] + [repr(v) if isinstance(v, float) else v
                                             for v in (val, se, lo, hi)] + [""])
    return buf.getvalue()


def run_simulate(settings: dict, built: dict) -> int:
    result = run_mc_study(built["study"])
    if settings["format"] == "json":
        report = {"command": "simulate", "config": _config_echo(settings),
                  "truth": dict(zip(result.names, result.truth.tolist())), "rows": result.rows()}
        _emit(json.dumps(_clean(report), indent=2) + "\n", settings["out"])
    else:
        _emit(result.to_csv(), settings["out"])
    return 0


def run_sensitivity(settings: dict, built: dict) -> int:
    cfg = built["pipeline"]
    grid = built["rho_grid"]
    data = parse_dataset(settings["data"])
    estimators = _estimators(settings)
    nuis = fit_nuisances(data, cfg)
    boot = None
    if "bootstrap" in built:
        boot = bootstrap_draws(data, cfg, built["bootstrap"], estimators, ("tau",), rhos=grid)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rho", "estimator", "coefficient", "estimate", "ci_lo", "ci_hi", "error"])
    failed = False
    for r in grid:
        inputs = build_inputs(data, nuis, cfg.with_rho(r), built["working_model"])
        for e in estimators:
            try:
                rep = estimate(inputs, e, "tau", settings["level"])
                ci = rep.ci
                if boot is not None:
                    ci, _ = boot.summary((r, e, "tau"), settings["level"])
                for j, name in enumerate(rep.names):
                    lo, hi = (repr(float(ci[j, 0])), repr(float(ci[j, 1]))) if ci is not None else ("", "")
                    w.writerow([repr(r), e, name, repr(float(rep.eta_hat[j])), lo, hi, ""])
            except PSCError as exc:
                failed = True
                w.writerow([repr(r), e, "", "", "", "", f"{type(exc).__name__}: {exc}"])
    if settings["format"] == "json":
        rows = list(csv.DictReader(io.StringIO(buf.getvalue())))
        _emit(json.dumps({"command": "sensitivity", "config": _config_echo(settings),
                          "rows": rows}, indent=2) + "\n", settings["out"])
    else:
        _emit(buf.getvalue(), settings["out"])
    return 1 if failed else 0


COMMANDS = {"estimate": run_estimate, "simulate": run_simulate, "sensitivity": run_sensitivity}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        settings = resolve_settings(ns)
        built = validate(ns.command, settings)
        return COMMANDS[ns.command](settings, built)
    except ConfigError as exc:
        print(f"psc: error: {exc}", file=sys.stderr)
        return 2
    except (PSCError, OSError) as exc:
        print(f"psc: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
