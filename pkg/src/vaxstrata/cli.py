"""Command-line front end.

Every subcommand reads a JSON config, validates it against the defaults
below (unknown keys are rejected), runs, and writes a JSON report holding
the package version, the effective config, results, coded warnings,
errors and wall-clock timings. Tables (sensitivity curves, study metrics,
power surfaces) are also written as CSV when a path is available.

Exit status is 0 when no error was recorded, 1 after an estimation error
and 2 for an invalid config. Warnings never change it.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import sys
import time
import warnings
from pathlib import Path
from typing import Mapping

import numpy as np

from . import __version__
from .bounds import BootstrapSpec, bounds_adjusted, bounds_bootstrap, bounds_unadjusted
from .dataset import TrialData, load_csv
from .diagnostics import ConfigError, VaxError, W_TIME_SEED, collect, warn
from .functionals import ESTIMANDS, METHODS, estimate
from .kernels import IMPLEMENTATION
from .nuisance import DEFAULT_DELTA, fit_nuisance_set
from .onestep import contrast, one_step
from .rng import DOMAIN_GENERATE, StreamKey
from .sensitivity import grid as eps_grid
from .sensitivity import sensitivity_sweep
from .simulation.dgp import DgpSpec, generate
from .simulation.power import DEFAULT_ESTIMATORS as POWER_ESTIMATORS
from .simulation.power import DEFAULT_ETA, power_surface
from .simulation.study import run_study
from .simulation.truth import population_bounds, rd_mapping, truth

COMMANDS = ("estimate", "bounds", "sensitivity", "simulate", "truth", "power")
SEEDED = ("simulate", "truth", "power")

# free-form value validated by the consuming function; defaults to null
OPAQUE = object()

_DATA = {"path": None, "schema": {"z": "z", "s": "s", "y": "y", "x": []}, "dgp": OPAQUE}
_COMMON = {"seed": None, "alpha": 0.05, "workers": 1, "out": None, "csv": None}
_CONTRASTS = ["psi1_er-psi0", "psi1_pi-psi0", "psi1_both-psi0", "eta1-eta0", "marginal_mu1-marginal_mu0"]

DEFAULTS = {
    "estimate": {
        "data": _DATA, "estimands": list(ESTIMANDS), "methods": ["onestep"], "nuisance": OPAQUE,
        "known_propensity": None, "delta": DEFAULT_DELTA, "contrasts": _CONTRASTS,
        "scales": ["additive", "multiplicative"],
    },
    "bounds": {"data": _DATA, "covariates": [], "bins": OPAQUE, "bootstrap_B": 500},
    "sensitivity": {
        "data": _DATA, "nuisance": OPAQUE, "known_propensity": None, "delta": DEFAULT_DELTA,
        "grid": {"start": 0.55, "stop": 2.2, "step": 0.05}, "values": None,
        "bounds": {"lower": None, "upper": None, "covariates": []},
    },
    "simulate": {
        "settings": OPAQUE, "estimators": ["psi1_pi-psi0", "psi1_er-psi0", "psi1_both-psi0"],
        "replicates": 1000, "nuisance": OPAQUE, "known_propensity": None, "true_propensity": False,
        "bootstrap_B": 500, "truth_draws": 1_000_000,
    },
    "truth": {"dgp": OPAQUE, "mode": "exact", "draws": 10_000_000, "rd_mapping": False,
              "population_bounds": False},
    "power": {
        "composition": [0.0, 0.0], "eta_d": list(DEFAULT_ETA), "eta_p": list(DEFAULT_ETA),
        "estimators": list(POWER_ESTIMATORS), "replicates": 1000, "n": 700, "nuisance": OPAQUE,
        "known_propensity": 0.5, "rd_draws": 1_000_000, "nb_variance_ratio": 2.0,
    },
}


# ---------------------------------------------------------------------------
# config handling


def _merge(defaults: Mapping, given: Mapping, where: str) -> dict:
    if not isinstance(given, Mapping):
        raise ConfigError(f"{where or 'config'} must be a JSON object")
    extra = set(given) - set(defaults)
    if extra:
        raise ConfigError(f"unknown key(s) {sorted(extra)} in {where or 'config'}")
    out = {}
    for k, d in defaults.items():
        path = f"{where}.{k}" if where else k
        if k not in given:
            out[k] = None if d is OPAQUE else copy.deepcopy(d)
        elif isinstance(d, dict) and d and given[k] is not None and k != "schema":
            out[k] = _merge(d, given[k], path)
        else:
            out[k] = copy.deepcopy(given[k])
    return out


def effective_config(command: str, given: Mapping, overrides: Mapping | None = None) -> dict:
    """Defaults-filled config for ``command`` with flag overrides applied.

    Raises
    ------
    ConfigError
        Unknown keys, missing inputs, a missing seed for a simulation
        command, or a nonexistent data file.
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    cfg = _merge({**_COMMON, **DEFAULTS[command]}, given, "")
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg[k] = v
    if cfg["seed"] is not None:
        if isinstance(cfg["seed"], bool) or not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
            raise ConfigError("seed must be a non-negative integer")
    if command in SEEDED and cfg["seed"] is None:
        raise ConfigError(f"'{command}' needs a seed; set \"seed\" or pass --seed")
    if not 0 < float(cfg["alpha"]) < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    if int(cfg["workers"]) < 1:
        raise ConfigError("workers must be at least 1")
    if "data" in cfg:
        _check_data(cfg)
    if command == "simulate":
        settings = cfg["settings"]
        if isinstance(settings, Mapping):
            settings = [settings]
        if not settings:
            raise ConfigError("simulate needs at least one entry in 'settings'")
        cfg["settings"] = [DgpSpec.from_dict(s).to_dict() for s in settings]
    if command == "truth":
        cfg["dgp"] = DgpSpec.from_dict(cfg["dgp"] or {}).to_dict()
        if cfg["mode"] not in ("exact", "monte_carlo"):
            raise ConfigError(f"unknown truth mode {cfg['mode']!r}")
    if command == "estimate":
        bad = [m for m in cfg["methods"] if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}")
        bad = [e for e in cfg["estimands"] if e not in ESTIMANDS]
        if bad:
            raise ConfigError(f"unknown estimand(s) {bad}")
        bad = [s for s in cfg["scales"] if s not in ("additive", "multiplicative")]
        if bad:
            raise ConfigError(f"unknown scale(s) {bad}")
    return cfg


def _check_data(cfg: dict):
    d = cfg["data"]
    if (d["path"] is None) == (d["dgp"] is None):
        raise ConfigError("data needs exactly one of 'path' or 'dgp'")
    if d["path"] is not None:
        if not Path(d["path"]).exists():
            raise ConfigError(f"data file not found: {d['path']}")
        missing = [k for k in ("z", "s", "y") if k not in d["schema"]]
        extra = set(d["schema"]) - {"z", "s", "y", "x"}
        if missing or extra:
            raise ConfigError(f"data.schema needs keys z, s, y (and optional x); got {sorted(d['schema'])}")
    else:
        d["dgp"] = DgpSpec.from_dict(d["dgp"]).to_dict()


def _load_data(cfg: dict) -> TrialData:
    d = cfg["data"]
    if d["path"] is not None:
        return load_csv(d["path"], d["schema"])
    spec = DgpSpec.from_dict(d["dgp"])
    seed = spec.seed if cfg["seed"] is None else cfg["seed"]
    return generate(spec, key=StreamKey(int(seed), (DOMAIN_GENERATE,)))


# ---------------------------------------------------------------------------
# JSON


def jsonable(v):
    """Plain JSON types; non-finite floats become ``None``."""
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [jsonable(x) for x in v.tolist()]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else None
    return v


def dumps(report: Mapping) -> str:
    """Canonical serialization; ``dumps(json.loads(dumps(r))) == dumps(r)``."""
    return json.dumps(jsonable(report), sort_keys=True, indent=2, ensure_ascii=True, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# commands


def _fit(data, cfg, monotone=False):
    kp = cfg["known_propensity"]
    return fit_nuisance_set(data, cfg["nuisance"] or {}, known_propensity=kp, delta=float(cfg["delta"]),
                            monotone=monotone)


def cmd_estimate(cfg: dict, errors: list) -> dict:
    """One row per (estimand, method) plus additive and multiplicative contrasts."""
    data = _load_data(cfg)
    nuis = _fit(data, cfg)
    alpha = float(cfg["alpha"])
    rows, reports = [], {}
    for e in cfg["estimands"]:
        for m in cfg["methods"]:
            try:
                if m == "onestep":
                    rep = one_step(e, data, nuis, alpha)
                    reports[e] = rep
                    rows.append(rep.to_dict())
                else:
                    pe = estimate(e, data, nuis, m)
                    rows.append({"estimand": e, "method": m, "point": pe.value})
            except VaxError as exc:
                errors.append(_error(exc, f"{e}:{m}"))
    contrasts = []
    for text in cfg["contrasts"]:
        a, op, b = _split_contrast(text)
        for name in (a, b):
            if name not in reports:
                try:
                    reports[name] = one_step(name, data, nuis, alpha)
                except VaxError as exc:
                    errors.append(_error(exc, text))
        if a not in reports or b not in reports:
            continue
        row = {"contrast": text}
        for scale in cfg["scales"]:
            try:
                row[scale] = contrast(reports[a], reports[b], scale, alpha).to_dict()
            except VaxError as exc:
                errors.append(_error(exc, f"{text}:{scale}"))
                row[scale] = None
        contrasts.append(row)
    return {"n": data.n, "nuisance": nuis.config, "estimates": rows, "contrasts": contrasts}


def _split_contrast(text: str):
    if "-" not in text:
        raise ConfigError(f"contrast {text!r} must look like 'a-b'")
    a, b = (t.strip() for t in text.split("-", 1))
    for e in (a, b):
        if e not in ESTIMANDS:
            raise ConfigError(f"unknown estimand {e!r} in contrast {text!r}")
    return a, "-", b


def _bootstrap_seed(cfg: dict) -> int:
    if cfg["seed"] is not None:
        return int(cfg["seed"])
    seed = time.time_ns() % (2 ** 63)
    warn(W_TIME_SEED, f"no seed given; bootstrap seeded from the clock with {seed}")
    return seed


def cmd_bounds(cfg: dict, errors: list) -> dict:
    """Unadjusted bounds, optional covariate-adjusted bounds, bootstrap intervals."""
    data = _load_data(cfg)
    B = int(cfg["bootstrap_B"])
    covs = tuple(cfg["covariates"])
    out = {"n": data.n}
    seed = _bootstrap_seed(cfg) if B > 0 else None
    out["bootstrap_seed"] = seed
    for label, cv in (("unadjusted", ()), ("adjusted", covs)):
        if label == "adjusted" and not cv:
            continue
        try:
            if B > 0:
                spec = BootstrapSpec(B, seed, float(cfg["alpha"]), cv, cfg["bins"], int(cfg["workers"]))
                rep = bounds_bootstrap(data, spec)
            elif cv:
                rep = bounds_adjusted(data, None, cv, cfg["bins"])
            else:
                rep = bounds_unadjusted(data)
            out[label] = rep.to_dict()
        except VaxError as exc:
            errors.append(_error(exc, label))
    return out


def cmd_sensitivity(cfg: dict, errors: list) -> tuple[dict, str | None]:
    """Sweep over the epsilon grid; bounds come from the config or the data."""
    data = _load_data(cfg)
    nuis = _fit(data, cfg, monotone=True)
    g = cfg["values"] if cfg["values"] is not None else eps_grid(**cfg["grid"])
    b = cfg["bounds"]
    given = (b["lower"] is not None, b["upper"] is not None)
    if any(given) and not all(given):
        raise ConfigError("bounds.lower and bounds.upper must be given together")
    if all(given):
        rep = _GivenBounds(float(b["lower"]), float(b["upper"]))
        bsrc = "config"
    else:
        rep = bounds_adjusted(data, None, tuple(b["covariates"])) if b["covariates"] else bounds_unadjusted(data)
        bsrc = "estimated"
    curve = sensitivity_sweep(data, nuis, g, rep, float(cfg["alpha"]), int(cfg["workers"]))
    out = {"n": data.n, "bounds_source": bsrc, **curve.to_dict()}
    return out, curve.to_csv()


class _GivenBounds:
    def __init__(self, lower: float, upper: float):
        self.lower, self.upper = lower, upper


def cmd_simulate(cfg: dict, errors: list) -> tuple[dict, str]:
    specs = [DgpSpec.from_dict(s) for s in cfg["settings"]]
    res = run_study(specs, cfg["estimators"], int(cfg["replicates"]), cfg["nuisance"],
                    cfg["known_propensity"], bool(cfg["true_propensity"]), float(cfg["alpha"]),
                    int(cfg["seed"]), int(cfg["workers"]), int(cfg["bootstrap_B"]),
                    truth_draws=int(cfg["truth_draws"]))
    return res.to_dict(), res.to_csv()


def cmd_truth(cfg: dict, errors: list) -> dict:
    spec = DgpSpec.from_dict(cfg["dgp"])
    tr = truth(spec, cfg["mode"], int(cfg["draws"]), int(cfg["seed"]))
    out = {"truth": tr.to_dict()}
    if cfg["rd_mapping"]:
        out["rd_mapping"] = rd_mapping(spec, draws=int(cfg["draws"]), seed=int(cfg["seed"]))
    if cfg["population_bounds"]:
        pb = population_bounds(spec)
        out["population_bounds"] = {"lower": pb.lower, "upper": pb.upper, "psi0": pb.psi0, "q": pb.q,
                                    "width": pb.width, "effect_additive": list(pb.effect_additive)}
    return out


def cmd_power(cfg: dict, errors: list) -> tuple[dict, str]:
    rd = int(cfg["rd_draws"]) if cfg["rd_draws"] else None
    surf = power_surface(tuple(cfg["composition"]), cfg["eta_d"], cfg["eta_p"], cfg["estimators"],
                         int(cfg["replicates"]), int(cfg["n"]), float(cfg["alpha"]), int(cfg["seed"]),
                         int(cfg["workers"]), cfg["nuisance"], cfg["known_propensity"], rd,
                         float(cfg["nb_variance_ratio"]))
    return surf.to_dict(), surf.to_csv()


HANDLERS = {"estimate": cmd_estimate, "bounds": cmd_bounds, "sensitivity": cmd_sensitivity,
            "simulate": cmd_simulate, "truth": cmd_truth, "power": cmd_power}


def _error(exc: Exception, where: str | None = None) -> dict:
    return {"code": getattr(exc, "code", "error"), "message": str(exc), "where": where}


def _warning_list(caught) -> list:
    counts: dict = {}
    for w in collect(caught):
        key = (w.code, w.message)
        counts[key] = counts.get(key, 0) + 1
    return [{"code": c, "message": m, "count": k} for (c, m), k in counts.items()]


def run(command: str, config: Mapping, overrides: Mapping | None = None) -> tuple[dict, str | None, int]:
    """Execute ``command``; returns ``(report, csv_text, exit_status)``."""
    t0 = time.perf_counter()
    report = {"version": __version__, "command": command, "kernels": IMPLEMENTATION,
              "config": None, "results": None, "warnings": [], "errors": []}
    errors: list = report["errors"]
    table = None
    status = 0
    try:
        cfg = effective_config(command, config, overrides)
        report["config"] = cfg
    except VaxError as exc:
        errors.append(_error(exc, "config"))
        report["timings"] = {"total_seconds": time.perf_counter() - t0}
        return report, None, 2
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        t1 = time.perf_counter()
        try:
            out = HANDLERS[command](cfg, errors)
            if isinstance(out, tuple):
                out, table = out
            report["results"] = out
        except ConfigError as exc:
            errors.append(_error(exc, command))
            status = 2
        except VaxError as exc:
            errors.append(_error(exc, command))
        t2 = time.perf_counter()
    report["warnings"] = _warning_list(caught)
    if errors and status == 0:
        status = 1
    report["timings"] = {"total_seconds": t2 - t0, "command_seconds": t2 - t1}
    return report, table, status


def _csv_path(cfg: Mapping | None, out: str | None) -> str | None:
    if cfg and cfg.get("csv"):
        return cfg["csv"]
    if out:
        return str(Path(out).with_suffix(".csv"))
    return None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vaxstrata", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for c in COMMANDS:
        s = sub.add_parser(c)
        s.add_argument("--config", required=True, help="JSON config file")
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--alpha", type=float, default=None)
        s.add_argument("--out", default=None, help="report path (default: stdout)")
        s.add_argument("--workers", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"vaxstrata: cannot read config: {exc}", file=sys.stderr)
        return 2
    overrides = {"seed": args.seed, "alpha": args.alpha, "out": args.out, "workers": args.workers}
    report, table, status = run(args.command, config, overrides)
    cfg = report["config"]
    out = cfg["out"] if cfg else args.out
    text = dumps(report)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    path = _csv_path(cfg, out)
    if table is not None and path:
        Path(path).write_text(table, encoding="utf-8")
    for e in report["errors"]:
        print(f"vaxstrata: error [{e['code']}] {e['message']}", file=sys.stderr)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
