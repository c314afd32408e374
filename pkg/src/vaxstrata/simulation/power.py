"""Power surfaces over the outcome-effect grid of the calibrated study."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import Sequence

from ..diagnostics import ConfigError
from ..parallel import pmap
from .dgp import DgpSpec
from .study import _required_nuisances, _run_replicate, _Task, parse_estimator
from .truth import truth_monte_carlo

DEFAULT_ETA = (0.0, -0.5, -1.0, -1.5, -2.0, -2.5, -3.0)
DEFAULT_ESTIMATORS = ("marginal_mu1-marginal_mu0", "psi1_er-psi0", "psi1_pi-psi0", "psi1_both-psi0", "eta1-eta0")
MAIN_TERMS = {"default": {"family": "logistic"}}


@dataclass(frozen=True)
class PowerCell:
    eta_D: float
    eta_P: float
    rd_D: float | None
    rd_P: float | None
    estimator: str
    rejection_rate: float
    replicates: int
    failed: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PowerSurface:
    """Rejection rates of the level-``alpha`` Wald test per grid cell and estimator."""

    delta_I: float
    delta_P: float
    n: int
    alpha: float
    replicates: int
    cells: tuple[PowerCell, ...]

    def rate(self, estimator: str, eta_D: float, eta_P: float) -> float:
        for c in self.cells:
            if c.estimator == estimator and c.eta_D == eta_D and c.eta_P == eta_P:
                return c.rejection_rate
        raise KeyError((estimator, eta_D, eta_P))

    def grid(self, estimator: str) -> dict:
        return {(c.eta_D, c.eta_P): c.rejection_rate for c in self.cells if c.estimator == estimator}

    def to_csv(self) -> str:
        cols = ("delta_I", "delta_P", "eta_D", "eta_P", "rd_D", "rd_P", "estimator", "rejection_rate",
                "replicates", "failed")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for c in self.cells:
            d = c.to_dict()
            w.writerow([self.delta_I, self.delta_P] + ["" if d[k] is None else d[k] for k in cols[2:]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"delta_I": self.delta_I, "delta_P": self.delta_P, "n": self.n, "alpha": self.alpha,
                "replicates": self.replicates, "cells": [c.to_dict() for c in self.cells]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def power_surface(composition: tuple[float, float], eta_d: Sequence[float] = DEFAULT_ETA,
                  eta_p: Sequence[float] = DEFAULT_ETA, estimators: Sequence[str] = DEFAULT_ESTIMATORS,
                  replicates: int = 1000, n: int = 700, alpha: float = 0.05, seed: int = 0, workers: int = 1,
                  nuisance_config=None, known_propensity: float | None = 0.5,
                  rd_draws: int | None = 1_000_000, nb_variance_ratio: float = 2.0) -> PowerSurface:
    """Power of each estimator's test of no effect over an ``(eta_D, eta_P)`` grid.

    Parameters
    ----------
    composition : (delta_I, delta_P)
        Stratum-composition shifts.
    eta_d, eta_p : sequence of float
        Outcome-effect grid.
    estimators : sequence of str
        Contrast expressions; additive contrasts are tested against 0.
    nuisance_config : mapping, optional
        Defaults to main-terms logistic regression for every nuisance.
    rd_draws : int or None
        Monte Carlo draws for the stratum risk-difference axis labels;
        ``None`` skips them.

    Returns
    -------
    PowerSurface
    """
    if not eta_d or not eta_p:
        raise ConfigError("effect grid is empty")
    d_i, d_p = (float(v) for v in composition)
    base = DgpSpec("provide_calibrated", n=int(n), delta_I=d_i, delta_P=d_p, nb_variance_ratio=nb_variance_ratio)
    specs = [base.with_(eta_D=float(a), eta_P=float(b)) for a in eta_d for b in eta_p]
    res = _run_without_truth(specs, estimators, replicates, nuisance_config or MAIN_TERMS, known_propensity,
                             alpha, seed, workers)
    rd_d, rd_p = {}, {}
    if rd_draws:
        for a in eta_d:
            rd_d[float(a)] = truth_monte_carlo(base.with_(eta_D=float(a), eta_P=0.0), rd_draws, seed).doomed_rd
        for b in eta_p:
            rd_p[float(b)] = truth_monte_carlo(base.with_(eta_D=0.0, eta_P=float(b)), rd_draws, seed).protected_rd
    cells = []
    for s, setting in zip(specs, res):
        for est, (rate, reps, failed) in setting.items():
            cells.append(PowerCell(s.eta_D, s.eta_P, rd_d.get(s.eta_D), rd_p.get(s.eta_P), est, rate, reps, failed))
    return PowerSurface(d_i, d_p, int(n), alpha, int(replicates), tuple(cells))


def _run_without_truth(specs, estimators, replicates, config, known_propensity, alpha, seed, workers):
    """Rejection rates only; no truth is needed for a test of no effect."""
    ests = tuple(parse_estimator(e) for e in estimators)
    for e in ests:
        if e.kind != "point" or e.method != "onestep" or e.op is None:
            raise ConfigError(f"power estimators must be one-step contrasts, got {e.text!r}")
    required = _required_nuisances(ests)
    tasks = [_Task(spec, k, r, int(seed), ests, config, known_propensity, False, alpha, 0, required)
             for k, spec in enumerate(specs) for r in range(int(replicates))]
    results = pmap(_run_replicate, tasks, workers)
    out = []
    for k in range(len(specs)):
        block = results[k * int(replicates):(k + 1) * int(replicates)]
        d = {}
        for e in ests:
            ok = [r[e.text][1] for r in block if r[e.text][0] == "ok"]
            rej = sum(1 for v in ok if v[4] < alpha)
            d[e.text] = (rej / len(ok) if ok else float("nan"), len(ok), len(block) - len(ok))
        out.append(d)
    return out
