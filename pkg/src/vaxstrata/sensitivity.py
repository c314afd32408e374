"""Sensitivity analysis for partial principal ignorability.

The sensitivity parameter ``eps`` is the ratio of the Immune to the
Protected mean of Y(1) given X; ``eps = 1`` is principal ignorability. For
each ``eps`` the functional is estimated by a one-step estimator, and the
values of ``eps`` at which the estimate meets the trimming bounds are
located on the grid.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .bounds import BoundsReport
from .dataset import TrialData
from .diagnostics import ConfigError, EstimationError, VaxError, W_SENSITIVITY_SKIP, warn
from .nuisance import NuisanceSet
from .onestep import EstimateReport, _wald, contrast, one_step, phi1_eps
from .parallel import pmap

DEFAULT_GRID = tuple(round(0.25 + 0.05 * k, 10) for k in range(46))  # 0.25 .. 2.5
CSV_COLUMNS = ("epsilon", "estimate", "se", "ci_lo", "ci_hi", "effect_additive", "effect_multiplicative")


def grid(start: float, stop: float, step: float) -> tuple[float, ...]:
    """Inclusive arithmetic grid, rounded to suppress accumulation error."""
    if not step > 0 or stop < start:
        raise ConfigError("grid needs step > 0 and stop >= start")
    k = int(math.floor((stop - start) / step + 1e-9))
    return tuple(round(start + i * step, 10) for i in range(k + 1))


def _require_monotone(nuis: NuisanceSet):
    if not nuis.monotone:
        raise ConfigError("sensitivity analysis needs nuisances fitted with monotone=True")


def psi1_eps(data: TrialData, nuis_monotone: NuisanceSet, epsilon: float, method: str = "onestep",
             alpha: float = 0.05) -> EstimateReport:
    """E{Y(1) | S(0)=1} under sensitivity parameter ``epsilon``.

    Parameters
    ----------
    data : TrialData
    nuis_monotone : NuisanceSet
        Fitted with ``monotone=True`` so that ``rho1 <= rho0``.
    epsilon : float
        Positive sensitivity parameter.
    method : {"onestep", "plugin"}
        For ``"plugin"`` the report carries the plug-in point and the
        gradient-based standard error.

    Raises
    ------
    EstimationError
        If ``(1 - eps) rho0(x) - rho1(x) + eps`` is within 1e-8 of zero at
        some sample point.
    """
    _require_monotone(nuis_monotone)
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise ConfigError(f"epsilon must be positive, got {epsilon!r}")
    gid = phi1_eps(epsilon)
    rep = one_step(f"psi1_pi_eps({epsilon:g})", data, nuis_monotone, alpha, gid=gid)
    if method == "onestep":
        return rep
    if method != "plugin":
        raise ConfigError(f"unknown method {method!r}")
    lo, hi, p = _wald(rep.plugin, rep.se, alpha)
    return EstimateReport(rep.estimand, rep.plugin, rep.se, lo, hi, p, alpha, rep.n, "plugin",
                          plugin=rep.plugin, correction=0.0, influence=rep.influence)


@dataclass(frozen=True)
class CurveRow:
    epsilon: float
    estimate: float
    se: float
    ci_lo: float
    ci_hi: float
    effect_additive: float
    effect_multiplicative: float | None


@dataclass(frozen=True)
class Breakpoint:
    """Where the curve meets a bound.

    ``bracket`` is the pair of adjacent grid values between which the
    crossing occurs (equal when the curve hits the bound at a grid point);
    ``interpolated`` is the linear interpolation inside the bracket.
    """

    bound: str
    bracket: tuple[float, float]
    interpolated: float

    def to_dict(self) -> dict:
        return {"bound": self.bound, "bracket": list(self.bracket), "interpolated": self.interpolated}


@dataclass(frozen=True)
class SensitivityCurve:
    """Estimates over an ``eps`` grid with bound crossings.

    ``breakpoints`` maps ``"lower"``/``"upper"`` to the crossings found, in
    increasing ``eps``. ``failed`` lists grid values whose estimation failed.
    """

    rows: tuple[CurveRow, ...]
    breakpoints: dict = field(default_factory=dict)
    failed: tuple[tuple[float, str], ...] = ()
    psi0: float | None = None
    bounds: tuple[float, float] | None = None
    reports: tuple = field(default=(), repr=False)

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([r.epsilon for r in self.rows])

    @property
    def estimates(self) -> np.ndarray:
        return np.array([r.estimate for r in self.rows])

    def at(self, epsilon: float) -> CurveRow:
        for r in self.rows:
            if math.isclose(r.epsilon, epsilon, rel_tol=0, abs_tol=1e-9):
                return r
        raise KeyError(epsilon)

    def first(self, bound: str) -> Breakpoint | None:
        bps = self.breakpoints.get(bound, ())
        return bps[0] if bps else None

    def last(self, bound: str) -> Breakpoint | None:
        bps = self.breakpoints.get(bound, ())
        return bps[-1] if bps else None

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    def to_dict(self) -> dict:
        return {
            "rows": [{c: getattr(r, c) for c in CSV_COLUMNS} for r in self.rows],
            "breakpoints": {k: [b.to_dict() for b in v] for k, v in self.breakpoints.items()},
            "failed": [{"epsilon": e, "error": m} for e, m in self.failed],
            "psi0": self.psi0,
            "bounds": list(self.bounds) if self.bounds else None,
        }


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def crossings(eps: np.ndarray, values: np.ndarray, level: float, bound: str) -> list[Breakpoint]:
    """All grid brackets where ``values - level`` changes sign."""
    out = []
    d = values - level
    for k in range(len(eps)):
        if d[k] == 0:
            out.append(Breakpoint(bound, (float(eps[k]), float(eps[k])), float(eps[k])))
        elif k + 1 < len(eps) and d[k] * d[k + 1] < 0:
            t = d[k] / (d[k] - d[k + 1])
            out.append(Breakpoint(bound, (float(eps[k]), float(eps[k + 1])),
                                  float(eps[k] + t * (eps[k + 1] - eps[k]))))
    return out


def _eval_one(args):
    data, nuis, eps, alpha, psi0_rep = args
    try:
        rep = psi1_eps(data, nuis, eps, "onestep", alpha)
    except VaxError as e:
        return eps, None, str(e)
    add = contrast(rep, psi0_rep, "additive").point
    try:
        mult = contrast(rep, psi0_rep, "multiplicative").point
    except EstimationError:
        mult = None
    return eps, (rep, add, mult), None


def sensitivity_sweep(data: TrialData, nuis_monotone: NuisanceSet, grid: Sequence[float] = DEFAULT_GRID,
                      bounds: BoundsReport | None = None, alpha: float = 0.05,
                      workers: int = 1) -> SensitivityCurve:
    """Evaluate the sensitivity functional over ``grid`` and locate breakpoints.

    Parameters
    ----------
    data, nuis_monotone
        As for :func:`psi1_eps`.
    grid : sequence of float
        Positive values; evaluated in increasing order.
    bounds : BoundsReport, optional
        When given, crossings of the point estimate with ``lower`` and
        ``upper`` are reported.

    Returns
    -------
    SensitivityCurve
        Failed grid values are skipped, listed and warned about.
    """
    _require_monotone(nuis_monotone)
    g = sorted({float(e) for e in grid})
    if not g:
        raise ConfigError("grid is empty")
    if any(not (np.isfinite(e) and e > 0) for e in g):
        raise ConfigError("grid values must be positive")
    psi0_rep = one_step("psi0", data, nuis_monotone, alpha)
    res = pmap(_eval_one, [(data, nuis_monotone, e, alpha, psi0_rep) for e in g], workers)
    rows, reports, failed = [], [], []
    for eps, ok, err in res:
        if ok is None:
            warn(W_SENSITIVITY_SKIP, f"epsilon={eps:g}: {err}")
            failed.append((eps, err))
            continue
        rep, add, mult = ok
        rows.append(CurveRow(eps, rep.point, rep.se, rep.ci_lo, rep.ci_hi, add, mult))
        reports.append(rep)
    bps = {}
    if bounds is not None and rows:
        e = np.array([r.epsilon for r in rows])
        v = np.array([r.estimate for r in rows])
        bps = {"lower": crossings(e, v, bounds.lower, "lower"), "upper": crossings(e, v, bounds.upper, "upper")}
    return SensitivityCurve(tuple(rows), bps, tuple(failed), psi0_rep.point,
                            (bounds.lower, bounds.upper) if bounds is not None else None, tuple(reports))
