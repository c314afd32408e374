"""Trimming bounds on E{Y(1) | S(0)=1} and the Naturally Infected effect.

Among vaccinated uninfected participants a fraction
``q = (rho0 - rho1) / (1 - rho1)`` is Protected. The Protected mean of Y(1)
is bracketed by the means of the lowest and highest ``q`` share of the
(Z=1, S=0) outcomes, giving

    lower = w mu11 + (1 - w) low,   upper = w mu11 + (1 - w) high,
    w = rho1 / rho0.

Continuous outcomes use strict-inequality quantile trimming; whenever the
(Z=1, S=0) cell has a tied value the average of the ``n* = ceil(q m)``
smallest / largest values is used instead.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import kernels as K
from .dataset import TrialData
from .diagnostics import (ConfigError, EstimationError, W_BOOT_FAILED, W_Q_CLAMP, W_STRICT_FALLBACK,
                          W_TIME_SEED, warn)
from .parallel import pmap
from .rng import DOMAIN_BOOTSTRAP, StreamKey

RETRY_CAP = 100
MAX_LEVELS = 64


@dataclass(frozen=True)
class BoundsReport:
    """Bounds on E{Y(1) | S(0)=1} with effect-scale versions.

    Attributes
    ----------
    lower, upper : float
        Point bounds.
    q : float
        Protected share of the vaccinated uninfected (cell-weighted when
        adjusted).
    trimmed_low, trimmed_high, mu10 : float
        Trimmed and untrimmed means of the (Z=1, S=0) cell (unadjusted only;
        cell-weighted averages otherwise).
    psi0 : float
        E{Y(0) | S(0)=1} used for the effect scales.
    effect_additive, effect_multiplicative : (float, float)
        ``(lower - psi0, upper - psi0)`` and ``(lower / psi0, upper / psi0)``.
    ci_lower, ci_upper : (float, float) or None
        Bootstrap percentile intervals for each bound.
    ci_effect_additive, ci_effect_multiplicative : (float, float) or None
        Outer interval from the lower bound's lower limit to the upper
        bound's upper limit, on each effect scale.
    covariates : tuple of str
        Adjustment set; empty for unadjusted bounds.
    """

    lower: float
    upper: float
    q: float
    trimmed_low: float
    trimmed_high: float
    mu10: float
    rho0: float
    rho1: float
    mu11: float
    psi0: float
    effect_additive: tuple[float, float]
    effect_multiplicative: tuple[float, float] | None
    covariates: tuple[str, ...] = ()
    tie_aware: bool = False
    q_clamped: bool = False
    ci_lower: tuple[float, float] | None = None
    ci_upper: tuple[float, float] | None = None
    ci_effect_additive: tuple[float, float] | None = None
    ci_effect_multiplicative: tuple[float, float] | None = None
    alpha: float | None = None
    replicates: int = 0
    failed_replicates: int = 0
    cells: tuple = field(default=(), repr=False)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        keys = ("lower", "upper", "q", "trimmed_low", "trimmed_high", "mu10", "rho0", "rho1", "mu11", "psi0",
                "effect_additive", "effect_multiplicative", "covariates", "tie_aware", "q_clamped",
                "ci_lower", "ci_upper", "ci_effect_additive", "ci_effect_multiplicative", "alpha",
                "replicates", "failed_replicates")
        d = {k: getattr(self, k) for k in keys}
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        d["width"] = self.width
        if self.cells:
            d["cells"] = [dict(c) for c in self.cells]
        return d


# ---------------------------------------------------------------------------
# kernel plumbing


@dataclass(frozen=True, eq=False)
class _Cell:
    rows: np.ndarray       # row indices into the full data
    z: np.ndarray
    s: np.ndarray
    y: np.ndarray
    order10: np.ndarray    # positions (within the cell) of Z=1,S=0 rows sorted by y


def _make_cell(data: TrialData, rows: np.ndarray) -> _Cell:
    z = np.ascontiguousarray(data.z[rows], dtype=np.int8)
    s = np.ascontiguousarray(data.s[rows], dtype=np.int8)
    y = np.ascontiguousarray(data.y[rows], dtype=float)
    pos = np.flatnonzero((z == 1) & (s == 0))
    order10 = np.ascontiguousarray(pos[np.argsort(y[pos], kind="stable")], dtype=np.int64)
    return _Cell(rows, z, s, y, order10)


def _whole(data: TrialData) -> _Cell:
    return data.cached(("bounds", "whole"), lambda: _make_cell(data, np.arange(data.n)))


def _cells(data: TrialData, covariates: Sequence, bins: Mapping | None = None):
    """Partition rows by the joint levels of ``covariates``."""
    idx = [data.column_index(c) for c in covariates]
    names = tuple(data.covariate_names[j] for j in idx)
    bins = dict(bins or {})
    cols = []
    for j, nm in zip(idx, names):
        v = data.x[:, j]
        if nm in bins:
            k = int(bins[nm])
            if k < 1:
                raise ConfigError(f"bins for {nm!r} must be positive")
            edges = np.quantile(v, np.linspace(0, 1, k + 1)[1:-1], method="inverted_cdf")
            v = np.searchsorted(edges, v, side="right").astype(float)
        elif np.unique(v).size > MAX_LEVELS:
            raise ConfigError(f"covariate {nm!r} has more than {MAX_LEVELS} levels; supply bins to discretize it")
        cols.append(v)
    if not cols:
        return names, [((), np.arange(data.n))]
    mat = np.column_stack(cols)
    levels, inv = np.unique(mat, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    order = np.argsort(inv, kind="stable")
    splits = np.cumsum(np.bincount(inv, minlength=len(levels)))[:-1]
    groups = np.split(order, splits)
    return names, [(tuple(float(v) for v in levels[g]), rows) for g, rows in enumerate(groups)]


def _run(cell: _Cell, counts: np.ndarray) -> np.ndarray:
    return K.bounds_from_counts(np.ascontiguousarray(counts, dtype=np.int64), cell.z, cell.s, cell.y, cell.order10)


def _cell_error(cell_id, counts, cell: _Cell) -> str:
    z, s = cell.z, cell.s
    c = lambda zz, ss: int(counts[(z == zz) & (s == ss)].sum())  # noqa: E731
    if c(0, 0) + c(0, 1) == 0 or c(1, 0) + c(1, 1) == 0:
        return f"cell {cell_id}: an arm is empty"
    if c(0, 1) == 0:
        return f"cell {cell_id}: no infected placebo participants"
    return f"cell {cell_id}: Protected mass but no vaccinated uninfected participants"


def _warn_flags(flags: int, where: str):
    if flags & K.FLAG_Q_NEG:
        warn(W_Q_CLAMP, f"{where}: q < 0 (rho1 exceeds rho0), clamped to 0", stacklevel=3)
    if flags & K.FLAG_Q_GT1:
        warn(W_Q_CLAMP, f"{where}: q > 1, clamped to 1", stacklevel=3)
    if flags & K.FLAG_STRICT_FALLBACK:
        warn(W_STRICT_FALLBACK, f"{where}: strict trimming set empty; used the ceil(q m) count", stacklevel=3)


def _effects(lower, upper, psi0):
    add = (lower - psi0, upper - psi0)
    mult = (lower / psi0, upper / psi0) if psi0 > 0 else None
    return add, mult


# ---------------------------------------------------------------------------
# point bounds


def bounds_unadjusted(data: TrialData) -> BoundsReport:
    """Unadjusted trimming bounds from the raw (z, s) cell fractions.

    Raises
    ------
    EstimationError
        Empty (Z=1, S=0) cell while ``q > 0``.
    """
    cell = _whole(data)
    out = _run(cell, np.ones(data.n, dtype=np.int64))
    if out[K.IDX_STATUS] != 0:
        raise EstimationError(_cell_error("all", np.ones(data.n), cell), "bounds")
    flags = int(out[K.IDX_FLAGS])
    _warn_flags(flags, "bounds")
    psi0 = float(out[K.IDX_MU01])
    lo, hi = float(out[K.IDX_LOWER]), float(out[K.IDX_UPPER])
    add, mult = _effects(lo, hi, psi0)
    return BoundsReport(
        lower=lo, upper=hi, q=float(out[K.IDX_Q]), trimmed_low=float(out[K.IDX_LOW]),
        trimmed_high=float(out[K.IDX_HIGH]), mu10=float(out[K.IDX_MU10]), rho0=float(out[K.IDX_RHO0]),
        rho1=float(out[K.IDX_RHO1]), mu11=float(out[K.IDX_MU11]), psi0=psi0, effect_additive=add,
        effect_multiplicative=mult, tie_aware=bool(flags & K.FLAG_TIES),
        q_clamped=bool(flags & (K.FLAG_Q_NEG | K.FLAG_Q_GT1)),
    )


def _adjusted_from_counts(cells, counts: np.ndarray, n_total: float):
    """Cell-weighted summary; returns (vector, per-cell list) or (None, message)."""
    acc = np.zeros(12)
    per = []
    flags = 0
    for cell_id, cell in cells:
        c = counts[cell.rows]
        w = c.sum() / n_total
        if w == 0:
            continue
        out = _run(cell, c)
        if out[K.IDX_STATUS] != 0:
            return None, _cell_error(cell_id, c, cell)
        flags |= int(out[K.IDX_FLAGS])
        acc[1:11] += w * out[1:11]
        per.append((cell_id, w, out))
    acc[K.IDX_FLAGS] = flags
    return acc, per


def bounds_adjusted(data: TrialData, nuis=None, covariates: Sequence = (), bins: Mapping | None = None) -> BoundsReport:
    """Covariate-adjusted bounds ``sum_x P(X=x) {lower(x), upper(x)}``.

    Parameters
    ----------
    data : TrialData
    nuis : NuisanceSet, optional
        When given, ``psi0`` for the effect scales is its plug-in value;
        otherwise the raw placebo infected mean.
    covariates : sequence of str or int
        Adjustment set; each must be discrete or listed in ``bins``.
    bins : mapping, optional
        Covariate name to a number of quantile bins.

    Raises
    ------
    EstimationError
        A cell lacking the participants its bounds need (named by level).
    """
    if not covariates:
        rep = bounds_unadjusted(data)
        if nuis is None:
            return rep
        return _with_psi0(rep, _nuis_psi0(nuis))
    names, groups = _cells(data, covariates, bins)
    cells = [(dict(zip(names, lv)), _make_cell(data, rows)) for lv, rows in groups]
    acc, per = _adjusted_from_counts(cells, np.ones(data.n, dtype=np.int64), data.n)
    if acc is None:
        raise EstimationError(per, "bounds")
    flags = int(acc[K.IDX_FLAGS])
    _warn_flags(flags, "adjusted bounds")
    psi0 = _nuis_psi0(nuis) if nuis is not None else _whole_psi0(data)
    lo, hi = float(acc[K.IDX_LOWER]), float(acc[K.IDX_UPPER])
    add, mult = _effects(lo, hi, psi0)
    table = tuple(
        tuple(sorted({"cell": cid, "weight": float(w), "q": float(o[K.IDX_Q]), "lower": float(o[K.IDX_LOWER]),
                      "upper": float(o[K.IDX_UPPER])}.items()))
        for cid, w, o in per
    )
    return BoundsReport(
        lower=lo, upper=hi, q=float(acc[K.IDX_Q]), trimmed_low=float(acc[K.IDX_LOW]),
        trimmed_high=float(acc[K.IDX_HIGH]), mu10=float(acc[K.IDX_MU10]), rho0=float(acc[K.IDX_RHO0]),
        rho1=float(acc[K.IDX_RHO1]), mu11=float(acc[K.IDX_MU11]), psi0=psi0, effect_additive=add,
        effect_multiplicative=mult, covariates=names, tie_aware=bool(flags & K.FLAG_TIES),
        q_clamped=bool(flags & (K.FLAG_Q_NEG | K.FLAG_Q_GT1)), cells=table,
    )


def _whole_psi0(data: TrialData) -> float:
    m = (data.z == 0) & (data.s == 1)
    return math.fsum(data.y[m].tolist()) / int(m.sum())


def _nuis_psi0(nuis) -> float:
    from .functionals import plugin_value

    return float(plugin_value("psi0", nuis.values))


def _with_psi0(rep: BoundsReport, psi0: float) -> BoundsReport:
    add, mult = _effects(rep.lower, rep.upper, psi0)
    return replace(rep, psi0=psi0, effect_additive=add, effect_multiplicative=mult)


# ---------------------------------------------------------------------------
# bootstrap


@dataclass(frozen=True)
class BootstrapSpec:
    """Nonparametric bootstrap settings.

    ``seed=None`` draws a seed from the clock and records it (with a
    warning) in the report metadata.
    """

    B: int = 500
    seed: int | None = None
    alpha: float = 0.05
    covariates: tuple = ()
    bins: Mapping | None = None
    workers: int = 1
    retry_cap: int = RETRY_CAP

    def __post_init__(self):
        if int(self.B) < 1:
            raise ConfigError("B must be at least 1")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")


def _replicate_summary(args):
    """(lower, upper, psi0, ok) for bootstrap replicate ``b``."""
    key, b, n, cells, whole, retry_cap = args
    rng = key.child(b).generator()
    for _ in range(retry_cap + 1):
        counts = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.int64)
        if cells is None:
            out = _run(whole, counts)
            if out[K.IDX_STATUS] != 0:
                continue
            return float(out[K.IDX_LOWER]), float(out[K.IDX_UPPER]), float(out[K.IDX_MU01]), 1.0
        out, _ = _adjusted_from_counts(cells, counts, n)
        if out is None:
            continue
        m = (whole.z == 0) & (whole.s == 1)
        c01 = counts[m]
        if c01.sum() == 0:
            continue
        psi0 = float(np.dot(c01, whole.y[m]) / c01.sum())
        return float(out[K.IDX_LOWER]), float(out[K.IDX_UPPER]), psi0, 1.0
    return math.nan, math.nan, math.nan, 0.0


def bootstrap_draws(data: TrialData, spec: BootstrapSpec) -> np.ndarray:
    """Replicate bounds as an array of shape (B, 4): lower, upper, psi0, ok.

    Replicate ``b`` uses its own stream, so the draws do not depend on
    ``spec.workers``. ``psi0`` is the raw placebo infected mean of the
    resample.
    """
    if spec.seed is None:
        raise ConfigError("bootstrap_draws needs an explicit seed")
    key = StreamKey(int(spec.seed), (DOMAIN_BOOTSTRAP,))
    cells = None
    if spec.covariates:
        names, groups = _cells(data, spec.covariates, spec.bins)
        cells = [(dict(zip(names, lv)), _make_cell(data, rows)) for lv, rows in groups]
    whole = _whole(data)
    items = [(key, b, data.n, cells, whole, spec.retry_cap) for b in range(int(spec.B))]
    return np.array(pmap(_replicate_summary, items, spec.workers), dtype=float).reshape(-1, 4)


def percentile_ci(values: np.ndarray, alpha: float) -> tuple[float, float]:
    """Equal-tailed percentile interval (linear interpolation of order statistics)."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return (math.nan, math.nan)
    lo, hi = np.quantile(v, [alpha / 2, 1 - alpha / 2])
    return float(lo), float(hi)


def bounds_bootstrap(data: TrialData, spec: BootstrapSpec | None = None, B: int | None = None,
                     nuis=None) -> BoundsReport:
    """Point bounds with bootstrap percentile intervals.

    Parameters
    ----------
    data : TrialData
    spec : BootstrapSpec, optional
    B : int, optional
        Overrides ``spec.B``.
    nuis : NuisanceSet, optional
        Passed to :func:`bounds_adjusted` for the point ``psi0``.

    Returns
    -------
    BoundsReport
        ``failed_replicates`` counts resamples that still lacked a required
        cell after ``retry_cap`` redraws; they are excluded.
    """
    spec = spec or BootstrapSpec()
    if B is not None:
        spec = replace(spec, B=int(B))
    if spec.seed is None:
        seed = time.time_ns() % (2 ** 63)
        warn(W_TIME_SEED, f"no seed given; bootstrap seeded from the clock with {seed}")
        spec = replace(spec, seed=seed)
    point = bounds_adjusted(data, nuis, spec.covariates, spec.bins)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # per-resample clamps are expected noise
        arr = bootstrap_draws(data, spec)
    ok = arr[:, 3] == 1
    failed = int((~ok).sum())
    if failed:
        warn(W_BOOT_FAILED, f"{failed} of {spec.B} bootstrap replicates failed after {spec.retry_cap} redraws")
    a = arr[ok]
    if a.shape[0] == 0:
        raise EstimationError("every bootstrap replicate failed", "bounds")
    ci_l = percentile_ci(a[:, 0], spec.alpha)
    ci_u = percentile_ci(a[:, 1], spec.alpha)
    add_l = percentile_ci(a[:, 0] - a[:, 2], spec.alpha)
    add_u = percentile_ci(a[:, 1] - a[:, 2], spec.alpha)
    ci_add = (add_l[0], add_u[1])
    ci_mult = None
    if np.all(a[:, 2] > 0):
        ml = percentile_ci(a[:, 0] / a[:, 2], spec.alpha)
        mu = percentile_ci(a[:, 1] / a[:, 2], spec.alpha)
        ci_mult = (ml[0], mu[1])
    return replace(point, ci_lower=ci_l, ci_upper=ci_u, ci_effect_additive=ci_add,
                   ci_effect_multiplicative=ci_mult, alpha=spec.alpha, replicates=int(a.shape[0]),
                   failed_replicates=failed)
