"""Nuisance regressions and their empirical marginalization.

The conditional functions needed by the estimators are

=========  =========================  ======================
name       target                     fitted on
=========  =========================  ======================
``pi``     P(Z=1 | X)                 all rows
``rho0``   P(S=1 | Z=0, X)            Z = 0
``rho1``   P(S=1 | Z=1, X)            Z = 1
``mu01``   E(Y | Z=0, S=1, X)         Z = 0, S = 1
``mu00``   E(Y | Z=0, S=0, X)         Z = 0, S = 0
``mu11``   E(Y | Z=1, S=1, X)         Z = 1, S = 1
``mu10``   E(Y | Z=1, S=0, X)         Z = 1, S = 0
``mu1``    E(Y | Z=1, X)              Z = 1
``mu_s0``  E(Y | S=0, X)              S = 0 (arms pooled)
=========  =========================  ======================

Each is a logistic (IRLS), linear (OLS) or saturated (cell-mean) working
model, or a fixed known function. Marginal quantities such as
``rho0_bar`` are sample averages of the fitted conditionals.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from ._numerics import expit, wmean
from .dataset import TrialData
from .diagnostics import (FitError, EstimationError, W_MONOTONE_CLAMP, W_NONCONVERGENCE,
                          W_TRUNCATION, warn)

FAMILIES = ("logistic", "linear", "saturated")
NUISANCES = ("pi", "rho0", "rho1", "mu01", "mu00", "mu11", "mu10", "mu1", "mu_s0")
PROBABILITY_NUISANCES = ("pi", "rho0", "rho1")
PRED_EPS = 1e-6
DEFAULT_DELTA = 0.01
MAX_LEVELS = 64
MAX_TABLE = 1_000_000

TARGETS = {
    "pi": ("z", "all"),
    "rho0": ("s", "z=0"),
    "rho1": ("s", "z=1"),
    "mu01": ("y", "z=0,s=1"),
    "mu00": ("y", "z=0,s=0"),
    "mu11": ("y", "z=1,s=1"),
    "mu10": ("y", "z=1,s=0"),
    "mu1": ("y", "z=1"),
    "mu_s0": ("y", "s=0"),
}


@dataclass(frozen=True)
class RegressionSpec:
    """Working-model specification.

    Parameters
    ----------
    family : {"logistic", "linear", "saturated"}
    covariates : tuple of int or str, optional
        Covariates entering the model; ``None`` means all, ``()`` gives an
        intercept-only model.
    interactions : tuple of tuples
        Products of covariates (pairs or triples) added as extra columns.
        Ignored by the saturated family, which is fully interacted.
    max_iterations, tolerance : IRLS controls; convergence is declared when
        the largest absolute mean score falls below ``tolerance``.
    """

    family: str = "logistic"
    covariates: tuple | None = None
    interactions: tuple = ()
    max_iterations: int = 100
    tolerance: float = 1e-8

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise FitError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.covariates is not None:
            object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "interactions", tuple(tuple(t) for t in self.interactions))
        if any(len(t) < 2 for t in self.interactions):
            raise FitError("interaction terms need at least two covariates")
        if self.max_iterations < 1 or not self.tolerance > 0:
            raise FitError("max_iterations must be >= 1 and tolerance > 0")

    @classmethod
    def from_dict(cls, d: Mapping) -> "RegressionSpec":
        allowed = {"family", "covariates", "interactions", "max_iterations", "tolerance"}
        extra = set(d) - allowed
        if extra:
            raise FitError(f"unknown regression keys {sorted(extra)}")
        return cls(**dict(d))

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "covariates": None if self.covariates is None else list(self.covariates),
            "interactions": [list(t) for t in self.interactions],
            "max_iterations": self.max_iterations,
            "tolerance": self.tolerance,
        }


@dataclass(frozen=True, eq=False)
class SaturatedTable:
    levels: tuple[np.ndarray, ...]
    means: np.ndarray  # dense, NaN where the cell had no rows
    counts: np.ndarray

    def codes(self, xs: np.ndarray) -> np.ndarray:
        code = np.zeros(xs.shape[0], dtype=np.int64)
        stride = 1
        for j, lev in enumerate(self.levels):
            pos = np.searchsorted(lev, xs[:, j])
            pos = np.clip(pos, 0, len(lev) - 1)
            bad = lev[pos] != xs[:, j]
            if np.any(bad):
                raise FitError(f"covariate value {xs[np.flatnonzero(bad)[0], j]!r} not seen in a saturated fit")
            code += pos * stride
            stride *= len(lev)
        return code


@dataclass(frozen=True, eq=False)
class FittedModel:
    """A fitted (or fixed) conditional model.

    ``predict_many`` applies the family's truncation: logistic predictions
    are clipped to ``[1e-6, 1 - 1e-6]``; saturated predictions are exact
    cell means; linear predictions are unclipped.
    """

    family: str
    covariates: tuple[int, ...] = ()
    interactions: tuple[tuple[int, ...], ...] = ()
    subset: str = "all"
    coef: np.ndarray | None = None
    table: SaturatedTable | None = None
    converged: bool = True
    iterations: int = 0
    offset: float = 0.0
    fn: Callable | None = None
    n_fit: int = 0
    n_covariates: int | None = None

    def predict_many(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.n_covariates is not None and x.shape[1] != self.n_covariates:
            raise FitError(f"dimension mismatch: model expects {self.n_covariates} covariates, got {x.shape[1]}")
        if self.family == "fixed":
            return np.broadcast_to(np.asarray(self.fn(x), dtype=float), (x.shape[0],)).copy()
        if self.family == "saturated":
            xs = x[:, list(self.covariates)]
            m = self.table.means[self.table.codes(xs)]
            if np.any(np.isnan(m)):
                raise FitError(f"saturated model on {self.subset!r}: a prediction cell has no fitting rows")
            return m
        eta = _design(x, self.covariates, self.interactions) @ self.coef + self.offset
        if self.family == "linear":
            return eta
        return np.clip(expit(eta), PRED_EPS, 1.0 - PRED_EPS)


def predict(model: FittedModel, x: Sequence[float]) -> float:
    """Prediction at a single covariate vector."""
    return float(model.predict_many(np.asarray(x, dtype=float).reshape(1, -1))[0])


def fixed_model(fn_or_value, n_covariates: int | None = None, name: str = "fixed") -> FittedModel:
    """Known conditional function, e.g. a randomization probability."""
    if callable(fn_or_value):
        fn = fn_or_value
    else:
        val = float(fn_or_value)
        fn = lambda x, _v=val: np.full(np.atleast_2d(x).shape[0], _v)  # noqa: E731
    return FittedModel(family="fixed", fn=fn, subset=name, n_covariates=n_covariates)


def _design(x: np.ndarray, cov: Sequence[int], inter: Sequence[Sequence[int]]) -> np.ndarray:
    cols = [np.ones(x.shape[0])]
    cols.extend(x[:, j] for j in cov)
    for t in inter:
        cols.append(np.prod(x[:, list(t)], axis=1))
    return np.column_stack(cols)


def _subset_mask(data: TrialData, subset) -> tuple[np.ndarray, str]:
    if isinstance(subset, np.ndarray):
        return subset.astype(bool), "custom"
    label = str(subset).replace(" ", "")
    mask = np.ones(data.n, dtype=bool)
    if label in ("", "all"):
        return mask, "all"
    for part in label.split(","):
        key, _, val = part.partition("=")
        if key not in ("z", "s") or val not in ("0", "1"):
            raise FitError(f"bad subset {subset!r}")
        mask &= getattr(data, key) == int(val)
    return mask, label


def _resolve(data: TrialData, spec: RegressionSpec) -> tuple[tuple[int, ...], tuple[tuple[int, ...], ...]]:
    if spec.covariates is None:
        cov = tuple(range(data.p))
    else:
        cov = tuple(data.column_index(c) for c in spec.covariates)
    inter = tuple(tuple(data.column_index(c) for c in t) for t in spec.interactions)
    return cov, inter


def _deviance(y: np.ndarray, eta: np.ndarray) -> float:
    # -2 loglik of a Bernoulli / quasi-Bernoulli response, stable in eta
    return 2.0 * float(np.sum(y * np.logaddexp(0.0, -eta) + (1.0 - y) * np.logaddexp(0.0, eta)))


def irls_logistic(X: np.ndarray, y: np.ndarray, max_iterations: int = 100, tolerance: float = 1e-8):
    """Newton-Raphson / IRLS for logistic regression with step halving.

    Returns ``(beta, converged, iterations)``. Convergence: max |mean score|
    ``<= tolerance``. A step is halved (up to 30 times) while it increases
    the deviance.
    """
    n, k = X.shape
    beta = np.zeros(k)
    eta = X @ beta
    dev = _deviance(y, eta)
    for it in range(max_iterations + 1):
        p = expit(eta)
        score = X.T @ (y - p) / n
        if np.max(np.abs(score)) <= tolerance:
            return beta, True, it
        if it == max_iterations:
            break
        w = p * (1.0 - p)
        H = (X * w[:, None]).T @ X / n
        try:
            delta = np.linalg.solve(H, score)
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(H, score, rcond=None)[0]
        step = 1.0
        for _ in range(31):
            cand = beta + step * delta
            ceta = X @ cand
            cdev = _deviance(y, ceta)
            if cdev <= dev + 1e-12 * max(1.0, abs(dev)):
                break
            step *= 0.5
        beta, eta, dev = cand, ceta, cdev
    return beta, False, max_iterations


def _check_rank(X: np.ndarray, names: list[str], nuisance: str | None):
    if X.shape[0] < X.shape[1]:
        raise FitError(f"rank deficient: {X.shape[0]} rows for {X.shape[1]} columns", nuisance, names[-1])
    scale = np.linalg.norm(X, axis=0)
    scale[scale == 0] = 1.0
    r = np.abs(np.diag(np.linalg.qr(X / scale, mode="r")))
    tol = max(X.shape) * np.finfo(float).eps * max(r.max(), 1.0) * 1e3
    bad = np.flatnonzero(r <= tol)
    if bad.size:
        raise FitError(f"rank deficient design; offending column {names[bad[0]]!r}", nuisance, names[bad[0]])


def _saturated(xs: np.ndarray, resp: np.ndarray, names: list[str], nuisance: str | None) -> SaturatedTable:
    levels = []
    for j in range(xs.shape[1]):
        lev = np.unique(xs[:, j])
        if not np.all(lev == np.round(lev)) or len(lev) > MAX_LEVELS:
            raise FitError(f"saturated family needs binary/categorical covariates; {names[j]!r} is not", nuisance, names[j])
        levels.append(lev)
    size = int(np.prod([len(v) for v in levels])) if levels else 1
    if size > MAX_TABLE:
        raise FitError(f"saturated table with {size} cells is too large", nuisance)
    table = SaturatedTable(tuple(levels), np.zeros(size), np.zeros(size))
    codes = table.codes(xs)
    cnt = np.bincount(codes, minlength=size).astype(float)
    tot = np.bincount(codes, weights=resp, minlength=size)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(cnt > 0, tot / np.where(cnt > 0, cnt, 1.0), np.nan)
    return SaturatedTable(tuple(levels), means, cnt)


def fit_model(data: TrialData, target: str, subset="all", spec: RegressionSpec | None = None,
              nuisance: str | None = None, levels_from: TrialData | None = None) -> FittedModel:
    """Fit ``target`` on covariates within ``subset``.

    Parameters
    ----------
    data : TrialData
    target : {"z", "s", "y"}
        Response column.
    subset : str or bool array
        ``"all"``, ``"z=1"``, ``"z=0,s=1"`` and so on, or an explicit mask.
    spec : RegressionSpec, optional
        Defaults to a main-terms logistic model.
    nuisance : str, optional
        Name used in error messages.

    Returns
    -------
    FittedModel

    Raises
    ------
    FitError
        Empty subset, rank-deficient design (column named), or invalid
        response for the family. Non-convergence only warns.
    """
    spec = spec or RegressionSpec()
    mask, label = _subset_mask(data, subset)
    if not np.any(mask):
        raise FitError(f"empty subset {label!r}", nuisance)
    resp = np.asarray(getattr(data, target), dtype=float)[mask]
    cov, inter = _resolve(data, spec)
    xs = data.x[mask]
    names = ["(intercept)"] + [data.covariate_names[j] for j in cov] + \
        ["*".join(data.covariate_names[j] for j in t) for t in inter]
    if spec.family == "saturated":
        table = _saturated(xs[:, list(cov)], resp, [data.covariate_names[j] for j in cov], nuisance)
        return FittedModel("saturated", cov, (), label, table=table, n_fit=int(mask.sum()),
                           n_covariates=data.p)
    X = _design(xs, cov, inter)
    _check_rank(X, names, nuisance)
    if spec.family == "linear":
        coef = np.linalg.lstsq(X, resp, rcond=None)[0]
        return FittedModel("linear", cov, inter, label, coef=coef, n_fit=int(mask.sum()),
                           n_covariates=data.p)
    if np.any((resp < 0) | (resp > 1)):
        raise FitError("logistic family needs a response in [0, 1]", nuisance)
    coef, ok, its = irls_logistic(X, resp, spec.max_iterations, spec.tolerance)
    if not ok:
        warn(W_NONCONVERGENCE, f"{nuisance or target}: IRLS did not converge in {its} iterations "
             "(possible separation); predictions are truncated")
    return FittedModel("logistic", cov, inter, label, coef=coef, converged=ok, iterations=its,
                       n_fit=int(mask.sum()), n_covariates=data.p)


def fit_logistic(data: TrialData, target: str, subset="all", spec: RegressionSpec | None = None,
                 nuisance: str | None = None) -> FittedModel:
    """Fit a working model; see :func:`fit_model` (logistic by default)."""
    return fit_model(data, target, subset, spec, nuisance)


def fit_monotone_infection(data: TrialData, spec: RegressionSpec | None = None) -> tuple[FittedModel, FittedModel]:
    """Joint logistic fit of S on (Z, X) with a non-positive Z coefficient.

    Returns ``(rho0_model, rho1_model)`` sharing covariate coefficients, so
    that ``rho1(x) <= rho0(x)`` for every ``x``. A positive fitted Z
    coefficient is clamped to 0 (the model is refitted without Z) with a
    warning.
    """
    spec = spec or RegressionSpec()
    if spec.family != "logistic":
        raise FitError("the monotone infection model must be logistic", "rho")
    cov, inter = _resolve(data, spec)
    Xc = _design(data.x, cov, inter)
    X = np.column_stack([Xc[:, :1], data.z.astype(float), Xc[:, 1:]])
    names = ["(intercept)", "Z"] + [data.covariate_names[j] for j in cov] + \
        ["*".join(data.covariate_names[j] for j in t) for t in inter]
    _check_rank(X, names, "rho")
    s = data.s.astype(float)
    beta, ok, its = irls_logistic(X, s, spec.max_iterations, spec.tolerance)
    bz = float(beta[1])
    coef = np.delete(beta, 1)
    if bz > 0:
        warn(W_MONOTONE_CLAMP, f"fitted vaccine coefficient {bz:.4g} > 0 clamped to 0 to enforce monotonicity")
        coef, ok, its = irls_logistic(Xc, s, spec.max_iterations, spec.tolerance)
        bz = 0.0
    if not ok:
        warn(W_NONCONVERGENCE, "rho (monotone): IRLS did not converge")
    common = dict(covariates=cov, interactions=inter, coef=coef, converged=ok, iterations=its,
                  n_fit=data.n, n_covariates=data.p)
    return (FittedModel("logistic", subset="z=0 (joint)", offset=0.0, **common),
            FittedModel("logistic", subset="z=1 (joint)", offset=bz, **common))


# ---------------------------------------------------------------------------
# evaluated nuisances


@dataclass(frozen=True, eq=False)
class NuisanceValues:
    """Nuisance functions evaluated at a set of covariate points.

    Arrays are aligned with the points; ``weights`` (summing to one) define
    the covariate distribution used for marginal quantities, uniform when
    ``None``. ``reference`` supplies marginals computed elsewhere (e.g. the
    fitting sample when evaluating at a single new point).
    """

    pi1: np.ndarray | None = None
    pi0: np.ndarray | None = None
    rho0: np.ndarray | None = None
    rho1: np.ndarray | None = None
    mu01: np.ndarray | None = None
    mu00: np.ndarray | None = None
    mu11: np.ndarray | None = None
    mu10: np.ndarray | None = None
    mu1: np.ndarray | None = None
    mu_s0: np.ndarray | None = None
    weights: np.ndarray | None = None
    reference: "NuisanceValues | None" = None
    _bars: dict = field(default_factory=dict, repr=False)

    FIELDS = ("pi1", "pi0", "rho0", "rho1", "mu01", "mu00", "mu11", "mu10", "mu1", "mu_s0")

    def require(self, *names: str, estimand: str | None = None):
        miss = [n for n in names if getattr(self, n) is None]
        if miss:
            raise EstimationError(f"missing nuisance(s) {miss}", estimand)
        return tuple(getattr(self, n) for n in names)

    def replace(self, **kw) -> "NuisanceValues":
        kw.setdefault("_bars", {})
        return replace(self, **kw)

    def mean(self, v) -> float:
        return wmean(v, self.weights)

    # derived conditionals -------------------------------------------------
    def derived(self, name: str) -> np.ndarray:
        if name in self.FIELDS:
            return self.require(name)[0]
        if name == "mu0":  # E(Y | Z=0, X) from the S-specific pieces
            rho0, mu01, mu00 = self.require("rho0", "mu01", "mu00")
            return rho0 * mu01 + (1 - rho0) * mu00
        if name == "uninf0_mu00":
            rho0, mu00 = self.require("rho0", "mu00")
            return (1 - rho0) * mu00
        if name == "rho_dot":
            pi0, pi1, rho0, rho1 = self.require("pi0", "pi1", "rho0", "rho1")
            return pi0 * rho0 + pi1 * rho1
        raise KeyError(name)

    def bar(self, name: str) -> float:
        """Marginal mean of a conditional over the covariate distribution."""
        if self.reference is not None:
            return self.reference.bar(name)
        if name not in self._bars:
            self._bars[name] = self.mean(self.derived(name))
        return self._bars[name]

    @property
    def rho0_bar(self) -> float:
        return self.bar("rho0")

    @property
    def rho1_bar(self) -> float:
        return self.bar("rho1")

    @property
    def rho_dot_bar(self) -> float:
        return self.bar("rho_dot")

    @property
    def mu1_bar(self) -> float:
        return self.bar("mu1")

    @property
    def mu00_bar(self) -> float:
        """Mean outcome among the placebo uninfected, covariate-standardized."""
        return self.bar("uninf0_mu00") / (1.0 - self.rho0_bar)

    def subset(self, idx) -> "NuisanceValues":
        kw = {f: (None if getattr(self, f) is None else getattr(self, f)[idx]) for f in self.FIELDS}
        return NuisanceValues(**kw, reference=self.reference or self)


@dataclass(frozen=True, eq=False)
class NuisanceSet:
    """Fitted nuisance models plus their values on the fitting sample.

    Attributes
    ----------
    models : dict
        Name to :class:`FittedModel` (``"pi"`` models P(Z=1 | X)).
    values : NuisanceValues
        Predictions at the fitting rows, probabilities truncated to
        ``[delta, 1 - delta]``; marginals are averages over those rows.
    delta : float
        Truncation applied to propensities and infection probabilities.
    monotone : bool
        Whether ``rho0``/``rho1`` come from the joint monotone fit.
    """

    models: dict
    values: NuisanceValues
    delta: float = DEFAULT_DELTA
    monotone: bool = False
    config: dict = field(default_factory=dict)
    truncated: dict = field(default_factory=dict)

    @property
    def rho0_bar(self) -> float:
        return self.values.rho0_bar

    @property
    def rho1_bar(self) -> float:
        return self.values.rho1_bar

    @property
    def rho_dot_bar(self) -> float:
        return self.values.rho_dot_bar

    @property
    def mu1_bar(self) -> float:
        return self.values.mu1_bar

    @property
    def mu00_bar(self) -> float:
        return self.values.mu00_bar

    def evaluate(self, x, weights=None, standalone: bool = False) -> NuisanceValues:
        """Nuisance values at new points.

        By default marginals still refer to the fitting sample; with
        ``standalone=True`` they are recomputed over ``x`` with ``weights``.
        """
        vals = _evaluate_models(self.models, np.atleast_2d(np.asarray(x, dtype=float)), self.delta)[0]
        ref = None if standalone else self.values
        return NuisanceValues(**vals, weights=weights, reference=ref)


def _evaluate_models(models: Mapping[str, FittedModel], x: np.ndarray, delta: float):
    out, truncated = {}, {}
    for name, m in models.items():
        v = m.predict_many(x)
        if name in PROBABILITY_NUISANCES:
            clipped = np.clip(v, delta, 1.0 - delta)
            k = int(np.count_nonzero(clipped != v))
            if k:
                truncated[name] = k
            v = clipped
        if name == "pi":
            out["pi1"] = v
            out["pi0"] = 1.0 - v
        else:
            out[name] = v
    return out, truncated


def default_spec(data: TrialData, name: str) -> RegressionSpec:
    """Main-terms logistic for binary responses, OLS for a non-binary outcome."""
    target = TARGETS[name][0]
    if target == "y" and not data.binary_y:
        return RegressionSpec(family="linear")
    return RegressionSpec(family="logistic")


def _coerce_spec(v) -> RegressionSpec:
    if isinstance(v, RegressionSpec):
        return v
    if isinstance(v, Mapping):
        return RegressionSpec.from_dict(v)
    raise FitError(f"cannot interpret regression spec {v!r}")


def fit_nuisance_set(data: TrialData, config: Mapping | None = None, known_propensity=None,
                     delta: float = DEFAULT_DELTA, monotone: bool = False,
                     required: Sequence[str] = NUISANCES) -> NuisanceSet:
    """Fit every required nuisance on its subset.

    Parameters
    ----------
    data : TrialData
    config : mapping, optional
        Nuisance name (see module docstring) to :class:`RegressionSpec` or
        dict. A ``"default"`` entry applies to names not listed; otherwise
        :func:`default_spec` is used. With ``monotone=True`` the ``"rho"``
        entry (falling back to ``"rho0"``) configures the joint model.
    known_propensity : float or callable, optional
        Known P(Z=1 | X); replaces the fitted ``pi``.
    delta : float
        Truncation bound for propensities and infection probabilities.
    monotone : bool
        Fit ``rho0``/``rho1`` jointly so that ``rho1 <= rho0``.
    required : sequence of str
        Subset of nuisances to fit.

    Returns
    -------
    NuisanceSet

    Raises
    ------
    FitError
        Propagated from the failing fit, labelled with the nuisance name.
    """
    if not 0 <= delta < 0.5:
        raise FitError("delta must lie in [0, 0.5)")
    config = dict(config or {})
    unknown = set(config) - set(NUISANCES) - {"default", "rho"}
    if unknown:
        raise FitError(f"unknown nuisance names {sorted(unknown)}")
    specs = {}
    for name in required:
        if name in config:
            specs[name] = _coerce_spec(config[name])
        elif "default" in config:
            specs[name] = _coerce_spec(config["default"])
        else:
            specs[name] = default_spec(data, name)
    models = {}
    for name in required:
        if name == "pi" and known_propensity is not None:
            models[name] = fixed_model(known_propensity, data.p, "known propensity")
            continue
        if monotone and name in ("rho0", "rho1"):
            continue
        target, subset = TARGETS[name]
        try:
            models[name] = fit_model(data, target, subset, specs[name], nuisance=name)
        except FitError as e:
            if e.nuisance is None:
                raise FitError(str(e), name, e.column) from e
            raise
    if monotone and ("rho0" in required or "rho1" in required):
        rspec = _coerce_spec(config.get("rho", config.get("rho0", config.get("default", {"family": "logistic"}))))
        models["rho0"], models["rho1"] = fit_monotone_infection(data, rspec)
        specs["rho0"] = specs["rho1"] = rspec
    try:
        vals, truncated = _evaluate_models(models, data.x, delta)
    except FitError as e:
        raise FitError(str(e)) from e
    for name, k in truncated.items():
        warn(W_TRUNCATION, f"{name}: {k} predictions truncated to [{delta}, {1 - delta}]")
    return NuisanceSet(models=models, values=NuisanceValues(**vals), delta=delta, monotone=monotone,
                       config={k: v.to_dict() for k, v in specs.items()}, truncated=truncated)


def nuisance_set_from_values(values: NuisanceValues, delta: float = DEFAULT_DELTA) -> NuisanceSet:
    """Wrap precomputed values (e.g. true nuisances) as a NuisanceSet."""
    return NuisanceSet(models={}, values=values, delta=delta)
