"""Replication studies: repeated generation, estimation and aggregation.

Estimators are named by short expressions:

``psi1_pi-psi0``        additive contrast of two estimands (one-step)
``psi1_pi/psi0``        multiplicative contrast, summarized on the log scale
``psi0``                a single estimand
``plugin:psi1_er-psi0`` method prefix (``plugin``, ``ipw`` or ``onestep``)
``bounds``              unadjusted bounds with bootstrap intervals
``bounds[x3]``          bounds adjusted for the listed covariates

Replicate ``r`` of setting ``k`` draws from the stream
``(seed, study, k, r)``, so results do not depend on the worker count.
"""
from __future__ import annotations

import csv
import io
import json
import math
import re
import warnings
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .._numerics import wmean
from ..bounds import BootstrapSpec, bounds_bootstrap
from ..diagnostics import ConfigError, VaxError, W_REPLICATE_FAILED, warn
from ..functionals import ESTIMANDS, REQUIRED, plugin_value, ipw_value
from ..nuisance import NUISANCES, fit_nuisance_set
from ..onestep import contrast, one_step
from ..parallel import pmap
from ..rng import DOMAIN_STUDY, StreamKey
from .dgp import DgpSpec, generate, true_nuisances
from .truth import TruthRecord, population_bounds, truth

_EXPR = re.compile(r"^(?:(plugin|ipw|onestep):)?([a-z0-9_]+)(?:([-/])([a-z0-9_]+))?$")
_BOUNDS = re.compile(r"^bounds(?:\[([^\]]*)\])?$")

TRUTH_FIELD = {
    "psi0": "psi0", "psi1_er": "psi1", "psi1_pi": "psi1", "psi1_both": "psi1",
    "eta1": "doomed_mu1", "eta0": "doomed_mu0", "marginal_mu1": "marginal_mu1", "marginal_mu0": "marginal_mu0",
}

# nuisances the gradient of each estimand needs beyond REQUIRED
_PI = ("pi1", "pi0")


@dataclass(frozen=True)
class Estimator:
    """Parsed estimator expression."""

    text: str
    kind: str                 # "point" or "bounds"
    method: str = "onestep"
    first: str | None = None
    op: str | None = None     # None, "-" or "/"
    second: str | None = None
    covariates: tuple[str, ...] = ()

    @property
    def scale(self) -> str:
        return {None: "level", "-": "additive", "/": "multiplicative"}[self.op]

    @property
    def estimands(self) -> tuple[str, ...]:
        return tuple(e for e in (self.first, self.second) if e)

    def nuisances(self) -> set:
        out = set()
        for e in self.estimands:
            out |= set(REQUIRED[e])
        return out


def parse_estimator(text: str) -> Estimator:
    """Parse an estimator expression (see module docstring)."""
    t = text.strip()
    m = _BOUNDS.match(t)
    if m:
        covs = tuple(c.strip() for c in (m.group(1) or "").split(",") if c.strip())
        return Estimator(t, "bounds", covariates=covs)
    m = _EXPR.match(t)
    if not m:
        raise ConfigError(f"cannot parse estimator {text!r}")
    method, a, op, b = m.groups()
    for e in (a, b):
        if e is not None and e not in ESTIMANDS:
            raise ConfigError(f"unknown estimand {e!r} in {text!r}")
    return Estimator(t, "point", method or "onestep", a, op, b)


def truth_value(est: Estimator, tr: TruthRecord) -> float:
    v1 = getattr(tr, TRUTH_FIELD[est.first])
    if est.op is None:
        return v1
    v0 = getattr(tr, TRUTH_FIELD[est.second])
    return v1 - v0 if est.op == "-" else v1 / v0


# ---------------------------------------------------------------------------
# one replicate


def _point(est: Estimator, data, nuis, alpha: float, cache: dict):
    """(point, se, ci_lo, ci_hi, p_value) for a point estimator."""
    if est.method != "onestep":
        nv = nuis.values
        f = (lambda e: plugin_value(e, nv)) if est.method == "plugin" else \
            (lambda e: ipw_value(e, nv, data.z, data.s, data.y))
        v1 = f(est.first)
        if est.op is None:
            v = v1
        else:
            v0 = f(est.second)
            v = v1 - v0 if est.op == "-" else v1 / v0
        return v, math.nan, math.nan, math.nan, math.nan
    reps = []
    for e in est.estimands:
        if e not in cache:
            cache[e] = one_step(e, data, nuis, alpha)
        reps.append(cache[e])
    r = reps[0] if est.op is None else contrast(reps[0], reps[1], est.scale, alpha)
    return r.point, r.se, r.ci_lo, r.ci_hi, r.p_value


@dataclass(frozen=True)
class _Task:
    spec: DgpSpec
    setting: int
    replicate: int
    seed: int
    estimators: tuple
    nuisance_config: Mapping | None
    known_propensity: object
    true_propensity: bool
    alpha: float
    bootstrap_B: int
    required: tuple


def _run_replicate(task: _Task):
    key = StreamKey(task.seed, (DOMAIN_STUDY, task.setting, task.replicate))
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            data = generate(task.spec.with_(seed=task.seed), rng=key.child(0).generator())
        except VaxError as e:
            return {est.text: ("error", str(e)) for est in task.estimators}
        nuis = None
        kp = task.known_propensity
        if task.true_propensity:
            spec = task.spec
            kp = lambda x, _s=spec: true_nuisances(_s, np.atleast_2d(x))["pi1"]  # noqa: E731
        cache = {}
        for est in task.estimators:
            try:
                if est.kind == "bounds":
                    b = bounds_bootstrap(data, BootstrapSpec(B=task.bootstrap_B, seed=int(key.child(1).generator()
                                                                                           .integers(2 ** 62)),
                                                             alpha=task.alpha, covariates=est.covariates))
                    out[est.text] = ("ok", (b.lower, b.upper, b.psi0, *b.ci_lower, *b.ci_upper,
                                            *b.ci_effect_additive, float(b.failed_replicates)))
                    continue
                if nuis is None:
                    nuis = fit_nuisance_set(data, task.nuisance_config, known_propensity=kp,
                                            required=task.required)
                out[est.text] = ("ok", _point(est, data, nuis, task.alpha, cache))
            except VaxError as e:
                out[est.text] = ("error", f"{type(e).__name__}: {e}")
    return out


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class EstimatorMetrics:
    """Replicate summary of one point estimator in one setting.

    Multiplicative estimators are summarized on the log scale (bias,
    variance and MSE of ``log(estimate)`` against ``log(truth)``);
    ``mean`` is reported on the natural scale.
    """

    estimator: str
    scale: str
    truth: float
    replicates: int
    failed: int
    mean: float
    bias: float
    bias_scaled: float
    variance_scaled: float
    mse_scaled: float
    coverage: float | None
    rejection_rate: float | None
    mean_se: float | None
    mc_se_bias: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BoundsMetrics:
    """Bounds performance; ``effect_coverage`` is the share of replicates whose
    point interval ``[lower - psi0, upper - psi0]`` contains the true effect,
    ``effect_ci_coverage`` the same for the bootstrap effect interval."""

    estimator: str
    lower_truth: float
    upper_truth: float
    effect_truth: float
    replicates: int
    failed: int
    bias_lower_scaled: float
    bias_upper_scaled: float
    coverage_lower: float
    coverage_upper: float
    effect_coverage: float
    effect_ci_coverage: float
    median_width: float
    iqr_width: tuple[float, float]
    mean_bootstrap_failures: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["iqr_width"] = list(self.iqr_width)
        return d


def _pvar(v: np.ndarray) -> float:
    if v.size == 0:
        return math.nan
    m = wmean(v)
    return wmean((v - m) ** 2)


def _summarize_point(est: Estimator, rows, t: float, n: int, alpha: float) -> EstimatorMetrics:
    ok = [r for r in rows if r[0] == "ok"]
    failed = len(rows) - len(ok)
    a = np.array([r[1] for r in ok], dtype=float).reshape(-1, 5)
    pts, se, lo, hi, p = a.T
    if est.scale == "multiplicative":
        valid = pts > 0
        e = np.log(pts[valid]) - math.log(t)
    else:
        valid = np.ones(pts.shape, dtype=bool)
        e = pts - t
    r = int(e.size)
    if r == 0:
        nan = math.nan
        return EstimatorMetrics(est.text, est.scale, t, 0, failed, nan, nan, nan, nan, nan, None, None, None, nan)
    bias = wmean(e)
    var = _pvar(e)
    mse = wmean(e ** 2)
    has_ci = est.method == "onestep"
    cov = float(np.mean((lo[valid] <= t) & (t <= hi[valid]))) if has_ci else None
    rej = float(np.mean(p[valid] < alpha)) if has_ci else None
    return EstimatorMetrics(
        estimator=est.text, scale=est.scale, truth=t, replicates=r, failed=failed, mean=wmean(pts[valid]),
        bias=bias, bias_scaled=bias * math.sqrt(n), variance_scaled=var * n, mse_scaled=mse * n,
        coverage=cov, rejection_rate=rej, mean_se=wmean(se[valid]) if has_ci else None,
        mc_se_bias=math.sqrt(var / r) if r > 1 else 0.0,
    )


def _summarize_bounds(est: Estimator, rows, lo_t: float, hi_t: float, eff_t: float, n: int) -> BoundsMetrics:
    ok = [r for r in rows if r[0] == "ok"]
    a = np.array([r[1] for r in ok], dtype=float).reshape(-1, 10)
    if a.shape[0] == 0:
        nan = math.nan
        return BoundsMetrics(est.text, lo_t, hi_t, eff_t, 0, len(rows), nan, nan, nan, nan, nan, nan, nan,
                             (nan, nan), nan)
    lower, upper, psi0, cl0, cl1, cu0, cu1, ce0, ce1, bf = a.T
    w = upper - lower
    q1, q3 = np.quantile(w, [0.25, 0.75])
    sq = math.sqrt(n)
    return BoundsMetrics(
        estimator=est.text, lower_truth=lo_t, upper_truth=hi_t, effect_truth=eff_t, replicates=int(a.shape[0]),
        failed=len(rows) - len(ok), bias_lower_scaled=wmean(lower - lo_t) * sq,
        bias_upper_scaled=wmean(upper - hi_t) * sq,
        coverage_lower=float(np.mean((cl0 <= lo_t) & (lo_t <= cl1))),
        coverage_upper=float(np.mean((cu0 <= hi_t) & (hi_t <= cu1))),
        effect_coverage=float(np.mean((lower - psi0 <= eff_t) & (eff_t <= upper - psi0))),
        effect_ci_coverage=float(np.mean((ce0 <= eff_t) & (eff_t <= ce1))),
        median_width=float(np.median(w)), iqr_width=(float(q1), float(q3)),
        mean_bootstrap_failures=float(np.mean(bf)),
    )


@dataclass(frozen=True)
class SettingResult:
    spec: DgpSpec
    truth: TruthRecord | None
    metrics: tuple
    failures: dict = field(default_factory=dict)

    def metric(self, estimator: str):
        for m in self.metrics:
            if m.estimator == estimator:
                return m
        raise KeyError(estimator)


@dataclass(frozen=True)
class StudyResult:
    """Aggregated study output, one :class:`SettingResult` per DGP setting."""

    settings: tuple
    replicates: int
    seed: int
    estimators: tuple[str, ...]
    alpha: float = 0.05

    def __getitem__(self, k: int) -> SettingResult:
        return self.settings[k]

    def rows(self) -> list[dict]:
        out = []
        for k, s in enumerate(self.settings):
            base = {"setting": k, **{f"dgp.{a}": b for a, b in s.spec.to_dict().items()}}
            for m in s.metrics:
                d = m.to_dict()
                if "iqr_width" in d:
                    d["iqr_width_lo"], d["iqr_width_hi"] = d.pop("iqr_width")
                out.append({**base, **d})
        return out

    def to_csv(self) -> str:
        rows = self.rows()
        cols = []
        for r in rows:
            for c in r:
                if c not in cols:
                    cols.append(c)
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: ("" if r.get(c) is None else r.get(c)) for c in cols})
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "replicates": self.replicates, "seed": self.seed, "alpha": self.alpha,
            "estimators": list(self.estimators),
            "settings": [
                {"dgp": s.spec.to_dict(), "truth": s.truth.to_dict() if s.truth else None,
                 "metrics": {m.estimator: m.to_dict() for m in s.metrics}, "failures": s.failures}
                for s in self.settings
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=True)


def _required_nuisances(estimators) -> tuple:
    need = set()
    for e in estimators:
        if e.kind == "point":
            need |= e.nuisances()
    names = set()
    for v in need:
        names.add("pi" if v in _PI else v)
    return tuple(n for n in NUISANCES if n in names)


def run_study(specs: DgpSpec | Sequence[DgpSpec], estimators: Sequence[str], replicates: int,
              nuisance_config: Mapping | None = None, known_propensity=None, true_propensity: bool = False,
              alpha: float = 0.05, seed: int = 0, workers: int = 1, bootstrap_B: int = 500,
              truths: Sequence[TruthRecord] | None = None, truth_draws: int = 1_000_000) -> StudyResult:
    """Run a replication study.

    Parameters
    ----------
    specs : DgpSpec or sequence of DgpSpec
        Settings; each is replicated ``replicates`` times.
    estimators : sequence of str
        Estimator expressions (module docstring).
    replicates : int
    nuisance_config : mapping, optional
        Passed to :func:`~vaxstrata.nuisance.fit_nuisance_set`.
    known_propensity : float, optional
        Fixed randomization probability.
    true_propensity : bool
        Use the DGP's true P(Z=1 | X) as a known propensity.
    alpha : float
        Nominal level of intervals and tests.
    seed : int
        Base seed of all replicate streams.
    workers : int
        Process count; never changes results.
    bootstrap_B : int
        Resamples for bounds estimators.
    truths : sequence of TruthRecord, optional
        Precomputed truths; otherwise exact (binary covariates) or Monte
        Carlo with ``truth_draws`` draws.

    Returns
    -------
    StudyResult
        Failed replicates are excluded per estimator and counted.
    """
    if int(replicates) < 1:
        raise ConfigError("replicates must be at least 1")
    if isinstance(specs, DgpSpec):
        specs = [specs]
    ests = tuple(parse_estimator(e) for e in estimators)
    if not ests:
        raise ConfigError("no estimators requested")
    required = _required_nuisances(ests)
    tasks = [
        _Task(spec, k, r, int(seed), ests, nuisance_config, known_propensity, true_propensity, alpha,
              int(bootstrap_B), required)
        for k, spec in enumerate(specs) for r in range(int(replicates))
    ]
    results = pmap(_run_replicate, tasks, workers)
    settings = []
    for k, spec in enumerate(specs):
        res = results[k * int(replicates):(k + 1) * int(replicates)]
        if truths is not None:
            tr = truths[k]
        elif spec.study == "asymptotics":
            tr = truth(spec, "exact")
        else:
            tr = truth(spec, "monte_carlo", draws=truth_draws, seed=seed)
        metrics, failures = [], {}
        for est in ests:
            rows = [r[est.text] for r in res]
            errs = [r[1] for r in rows if r[0] == "error"]
            if errs:
                failures[est.text] = {"count": len(errs), "rate": len(errs) / len(rows), "first": errs[0]}
                warn(W_REPLICATE_FAILED, f"setting {k}, {est.text}: {len(errs)} of {len(rows)} replicates failed")
            if est.kind == "bounds":
                pb = population_bounds(spec, est.covariates)
                metrics.append(_summarize_bounds(est, rows, pb.lower, pb.upper, tr.additive, spec.n))
            else:
                metrics.append(_summarize_point(est, rows, truth_value(est, tr), spec.n, alpha))
        settings.append(SettingResult(spec, tr, tuple(metrics), failures))
    return StudyResult(tuple(settings), int(replicates), int(seed), tuple(e.text for e in ests), alpha)
