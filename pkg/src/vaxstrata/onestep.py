"""Efficient gradients, one-step estimators and influence-function inference.

For an estimand with plug-in value ``psi_n`` and estimated gradient
``Phi_n``, the one-step estimator is ``psi_n + mean(Phi_n(O_i))`` with
standard error ``sqrt(var(Phi_n) / n)`` (population variance). Ratio
contrasts are handled on the log scale by the delta method.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from ._numerics import guard, wmean, wvar
from .dataset import Observation, TrialData
from .diagnostics import EstimationError
from .functionals import (REQUIRED, _eid, eps_denominator, plugin_value, psi1_eps_plugin)
from .nuisance import NuisanceSet, NuisanceValues


@dataclass(frozen=True)
class GradientId:
    """Gradient identifier; ``epsilon`` is used only by ``Phi1_eps``."""

    name: str
    epsilon: float | None = None

    NAMES = ("Phi0", "Phi1_ER", "Phi1_PI", "Phi1_both", "Theta0", "Theta1", "Phi1_eps",
             "Phi_mu1", "Phi_mu0")

    def __post_init__(self):
        if self.name not in self.NAMES:
            raise EstimationError(f"unknown gradient {self.name!r}")
        if (self.name == "Phi1_eps") != (self.epsilon is not None):
            raise EstimationError("epsilon must be given exactly for Phi1_eps")

    def __str__(self) -> str:
        return self.name if self.epsilon is None else f"{self.name}({self.epsilon:g})"


PHI0 = GradientId("Phi0")
PHI1_ER = GradientId("Phi1_ER")
PHI1_PI = GradientId("Phi1_PI")
PHI1_BOTH = GradientId("Phi1_both")
THETA0 = GradientId("Theta0")
THETA1 = GradientId("Theta1")
PHI_MU1 = GradientId("Phi_mu1")
PHI_MU0 = GradientId("Phi_mu0")


def phi1_eps(epsilon: float) -> GradientId:
    return GradientId("Phi1_eps", float(epsilon))


GRADIENT_OF = {
    "psi0": PHI0, "psi1_er": PHI1_ER, "psi1_pi": PHI1_PI, "psi1_both": PHI1_BOTH,
    "eta0": THETA0, "eta1": THETA1, "marginal_mu1": PHI_MU1, "marginal_mu0": PHI_MU0,
}


def plugin_for(gid: GradientId, nv: NuisanceValues) -> float:
    """Plug-in value of the functional whose gradient is ``gid``."""
    if gid.name == "Phi1_eps":
        return psi1_eps_plugin(nv, gid.epsilon)
    est = {v.name: k for k, v in GRADIENT_OF.items()}[gid.name]
    return plugin_value(est, nv)


def gradient_values(gid: GradientId, z, s, y, nv: NuisanceValues, psi: float) -> np.ndarray:
    """Estimated gradient at each observation.

    Parameters
    ----------
    gid : GradientId
    z, s, y : array_like
        Observed arm, infection and outcome, aligned with ``nv``.
    nv : NuisanceValues
        Nuisances at the observations' covariates; marginals come from
        ``nv`` (or its reference).
    psi : float
        Current value of the functional (the plug-in for a one-step).

    Returns
    -------
    ndarray
        ``Phi(O_i)``, mean zero at the truth.
    """
    z = np.asarray(z, dtype=float)
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    name = gid.name

    if name in ("Phi0", "Theta0", "Phi_mu0"):
        (pi0,) = nv.require("pi0", estimand=name)
        a = (1.0 - z) / pi0
    if name not in ("Phi0", "Phi_mu0"):
        (pi1,) = nv.require("pi1", estimand=name)
        b = z / pi1
        if name in ("Phi1_ER", "Phi1_PI", "Phi1_both", "Phi1_eps"):
            (pi0,) = nv.require("pi0", estimand=name)
            a = (1.0 - z) / pi0

    if name == "Phi0":
        rho0, mu01 = nv.require("rho0", "mu01", estimand=name)
        r0 = guard(nv.rho0_bar, "rho0_bar", name)
        return (a * s / r0 * (y - mu01) + (mu01 - psi) / r0 * a * (s - rho0)
                - psi / r0 * (rho0 - r0) + rho0 * mu01 / r0 - psi)

    if name == "Phi1_ER":
        rho0, mu1, mu00 = nv.require("rho0", "mu1", "mu00", estimand=name)
        r0 = guard(nv.rho0_bar, "rho0_bar", name)
        num1 = b * (y - mu1) + mu1 - nv.mu1_bar
        num0 = (a * (1.0 - s) * (y - mu00) - a * mu00 * (s - rho0)
                + (1.0 - rho0) * mu00 - nv.bar("uninf0_mu00"))
        den = a * (s - rho0) + rho0 - r0
        return (num1 - num0 - psi * den) / r0

    if name in ("Phi1_PI", "Phi1_both"):
        other = "mu10" if name == "Phi1_PI" else "mu_s0"
        rho0, rho1, mu11, m = nv.require("rho0", "rho1", "mu11", other, estimand=name)
        r0 = guard(nv.rho0_bar, "rho0_bar", name)
        if name == "Phi1_PI":
            resid0 = b * (1.0 - s) * (rho0 - rho1) / (1.0 - rho1) * (y - m)
        else:
            p_uninf = pi0 * (1.0 - rho0) + pi1 * (1.0 - rho1)
            resid0 = (1.0 - s) / p_uninf * (rho0 - rho1) * (y - m)
        h = rho1 * mu11 + (rho0 - rho1) * m
        return (b * s / r0 * (y - mu11) + resid0 / r0 + b * (mu11 - m) / r0 * (s - rho1)
                + a * (m - psi) / r0 * (s - rho0) - psi / r0 * (rho0 - r0) + h / r0 - psi)

    if name in ("Theta0", "Theta1"):
        rho1, = nv.require("rho1", estimand=name)
        r1 = guard(nv.rho1_bar, "rho1_bar", name)
        if name == "Theta1":
            (mu,) = nv.require("mu11", estimand=name)
            resid = b * s / r1 * (y - mu)
        else:
            rho0, mu = nv.require("rho0", "mu01", estimand=name)
            resid = a * s / r1 * rho1 / rho0 * (y - mu)
        return (resid + (mu - psi) / r1 * b * (s - rho1) - psi / r1 * (rho1 - r1)
                + rho1 * mu / r1 - psi)

    if name == "Phi1_eps":
        eps = gid.epsilon
        rho0, rho1, mu11, mu10 = nv.require("rho0", "rho1", "mu11", "mu10", estimand=name)
        r0 = guard(nv.rho0_bar, "rho0_bar", name)
        d = eps_denominator(nv, eps)
        prot = (rho0 - rho1) * (1.0 - rho1)
        h = rho1 * mu11 + prot / d * mu10
        d_rho1 = mu11 + mu10 * (-(1.0 - rho1) / d - (rho0 - rho1) / d + prot / d ** 2)
        d_rho0 = mu10 * ((1.0 - rho1) / d - (1.0 - eps) * prot / d ** 2)
        return (b * s * (y - mu11) + b * (1.0 - s) * (rho0 - rho1) / d * (y - mu10)
                + b * d_rho1 * (s - rho1) + a * d_rho0 * (s - rho0)
                - psi * (a * (s - rho0) + rho0 - r0)) / r0 + h / r0 - psi

    if name == "Phi_mu1":
        (mu1,) = nv.require("mu1", estimand=name)
        return b * (y - mu1) + mu1 - psi
    mu0 = nv.derived("mu0")
    return a * (y - mu0) + mu0 - psi


def gradient(gid: GradientId, o: Observation, nuis: NuisanceSet, plugin_values: float | None = None) -> float:
    """Estimated gradient at a single observation.

    Marginal quantities come from the sample ``nuis`` was fitted on.
    """
    nv = nuis.evaluate(np.asarray(o.x, dtype=float).reshape(1, -1))
    psi = plugin_for(gid, nuis.values) if plugin_values is None else plugin_values
    return float(gradient_values(gid, [o.z], [o.s], [o.y], nv, psi)[0])


@dataclass(frozen=True, eq=False)
class InfluenceEvaluation:
    values: np.ndarray
    mean: float
    variance: float

    @classmethod
    def of(cls, values: np.ndarray, weights=None) -> "InfluenceEvaluation":
        values = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise EstimationError("non-finite gradient values")
        return cls(values, wmean(values, weights), wvar(values, weights))


def evaluate_gradient(gid: GradientId, data: TrialData, nuis: NuisanceSet,
                      psi: float | None = None) -> InfluenceEvaluation:
    nv = nuis.values
    psi = plugin_for(gid, nv) if psi is None else psi
    return InfluenceEvaluation.of(gradient_values(gid, data.z, data.s, data.y, nv, psi))


_Z = NormalDist()


def _wald(point: float, se: float, alpha: float):
    zq = _Z.inv_cdf(1.0 - alpha / 2.0)
    if se > 0:
        p = 2.0 * (1.0 - _Z.cdf(abs(point) / se))
    else:
        p = 0.0 if point != 0 else 1.0
    return point - zq * se, point + zq * se, min(max(p, 0.0), 1.0)


@dataclass(frozen=True, eq=False)
class EstimateReport:
    """Point estimate with influence-function inference.

    For ``scale="multiplicative"`` the point is a ratio; ``log_*`` fields
    hold the log-scale point, SE and CI, and ``ci_lo``/``ci_hi`` are their
    exponentials. ``p_value`` tests a null of 0 (additive, level) or 1
    (multiplicative).
    """

    estimand: str
    point: float
    se: float
    ci_lo: float
    ci_hi: float
    p_value: float
    alpha: float
    n: int
    method: str = "onestep"
    scale: str = "level"
    plugin: float | None = None
    correction: float | None = None
    log_point: float | None = None
    log_se: float | None = None
    log_ci_lo: float | None = None
    log_ci_hi: float | None = None
    influence: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        keys = ("estimand", "method", "scale", "point", "se", "ci_lo", "ci_hi", "p_value", "alpha", "n",
                "plugin", "correction", "log_point", "log_se", "log_ci_lo", "log_ci_hi")
        return {k: getattr(self, k) for k in keys}

    def covers(self, value: float) -> bool:
        return self.ci_lo <= value <= self.ci_hi


def report_from_influence(label: str, point: float, phi: np.ndarray, alpha: float, scale: str = "level",
                          method: str = "onestep", plugin: float | None = None,
                          correction: float | None = None) -> EstimateReport:
    n = phi.shape[0]
    se = math.sqrt(wvar(phi) / n)
    lo, hi, p = _wald(point, se, alpha)
    return EstimateReport(label, point, se, lo, hi, p, alpha, n, method, scale, plugin, correction,
                          influence=phi)


def one_step(estimand, data: TrialData, nuis: NuisanceSet, alpha: float = 0.05,
             gid: GradientId | None = None) -> EstimateReport:
    """One-step estimator ``plugin + mean(gradient)`` with Wald inference.

    Parameters
    ----------
    estimand : str or EstimandId
        Any estimand id; ``gid`` overrides the gradient (used for the
        sensitivity family).
    data : TrialData
    nuis : NuisanceSet
        Fitted on ``data``.
    alpha : float
        Two-sided level of the interval.

    Returns
    -------
    EstimateReport
        ``influence`` holds the per-observation gradient values.
    """
    if gid is None:
        e = _eid(estimand)
        gid = GRADIENT_OF[e]
        nuis.values.require(*REQUIRED[e], estimand=e)
        label = e
    else:
        label = str(estimand)
    nv = nuis.values
    psi = plugin_for(gid, nv)
    ev = InfluenceEvaluation.of(gradient_values(gid, data.z, data.s, data.y, nv, psi))
    point = psi + ev.mean
    return report_from_influence(label, point, ev.values, alpha, plugin=psi, correction=ev.mean)


def contrast(e1: EstimateReport, e0: EstimateReport, scale: str = "additive",
             alpha: float | None = None) -> EstimateReport:
    """Additive or multiplicative contrast of two reports on the same data.

    The additive influence function is ``Phi1 - Phi0``; on the
    multiplicative scale the log ratio has influence function
    ``Phi1 / psi1 - Phi0 / psi0`` and the interval is exponentiated.
    """
    if e1.influence is None or e0.influence is None or e1.n != e0.n:
        raise EstimationError("contrast needs per-observation influence values on the same sample")
    alpha = e1.alpha if alpha is None else alpha
    label_op = "-" if scale == "additive" else "/"
    label = f"{e1.estimand}{label_op}{e0.estimand}"
    if scale == "additive":
        return report_from_influence(label, e1.point - e0.point, e1.influence - e0.influence, alpha,
                                     scale="additive")
    if scale != "multiplicative":
        raise EstimationError(f"unknown scale {scale!r}", label)
    if not e0.point > 0 or not e1.point > 0:
        raise EstimationError(f"multiplicative scale needs positive means, got {e1.point!r} and {e0.point!r}",
                              label)
    phi = e1.influence / e1.point - e0.influence / e0.point
    lp = math.log(e1.point) - math.log(e0.point)
    n = phi.shape[0]
    lse = math.sqrt(wvar(phi) / n)
    llo, lhi, p = _wald(lp, lse, alpha)
    return EstimateReport(label, math.exp(lp), math.exp(lp) * lse, math.exp(llo), math.exp(lhi), p, alpha, n,
                          "onestep", "multiplicative", log_point=lp, log_se=lse, log_ci_lo=llo,
                          log_ci_hi=lhi, influence=phi)
