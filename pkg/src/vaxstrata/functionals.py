"""Identifying functionals and their plug-in and IPW estimators.

Notation: ``pi_z(x) = P(Z=z | X=x)``, ``rho_z(x) = P(S=1 | Z=z, X=x)``,
``mu_zs(x) = E(Y | Z=z, S=s, X=x)``, ``mu_1.(x) = E(Y | Z=1, X=x)`` and
``mu_.0(x) = E(Y | S=0, X=x)``; a bar denotes the covariate average, e.g.
``rho0_bar = E{rho_0(X)}``.

============== ============================================== =====================================
estimand       target                                          plug-in
============== ============================================== =====================================
psi0           E{Y(0) | S(0)=1}                                E{rho0 mu01} / rho0_bar
psi1_er        E{Y(1) | S(0)=1}, exclusion restriction         [mu1_bar - E{(1-rho0) mu00}] / rho0_bar
psi1_pi        E{Y(1) | S(0)=1}, principal ignorability        E{rho1 mu11 + (rho0-rho1) mu10} / rho0_bar
psi1_both      E{Y(1) | S(0)=1}, both assumptions              E{rho1 mu11 + (rho0-rho1) mu_.0} / rho0_bar
eta1           E{Y(1) | Doomed}                                E{rho1 mu11} / rho1_bar
eta0           E{Y(0) | Doomed}                                E{rho1 mu01} / rho1_bar
marginal_mu1   E{Y(1)}                                         mu1_bar
marginal_mu0   E{Y(0)}                                         E{rho0 mu01 + (1-rho0) mu00}
============== ============================================== =====================================
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._numerics import guard
from .dataset import TrialData
from .diagnostics import EstimationError, W_POSITIVITY, W_PROTECTED_CLAMP, warn
from .nuisance import NuisanceSet, NuisanceValues


class EstimandId(str, Enum):
    PSI0 = "psi0"
    PSI1_ER = "psi1_er"
    PSI1_PI = "psi1_pi"
    PSI1_BOTH = "psi1_both"
    ETA0 = "eta0"
    ETA1 = "eta1"
    MARGINAL_MU1 = "marginal_mu1"
    MARGINAL_MU0 = "marginal_mu0"

    def __str__(self) -> str:
        return self.value


ESTIMANDS = tuple(e.value for e in EstimandId)
METHODS = ("plugin", "ipw", "onestep")

# nuisances consumed by each estimand (plug-in, IPW and gradient together)
REQUIRED = {
    "psi0": ("pi0", "rho0", "mu01"),
    "psi1_er": ("pi1", "pi0", "rho0", "mu1", "mu00"),
    "psi1_pi": ("pi1", "pi0", "rho0", "rho1", "mu11", "mu10"),
    "psi1_both": ("pi1", "pi0", "rho0", "rho1", "mu11", "mu_s0"),
    "eta1": ("pi1", "rho1", "mu11"),
    "eta0": ("pi1", "pi0", "rho0", "rho1", "mu01"),
    "marginal_mu1": ("pi1", "mu1"),
    "marginal_mu0": ("pi0", "rho0", "mu01", "mu00"),
}


@dataclass(frozen=True)
class PointEstimate:
    estimand: str
    value: float
    method: str
    nuisances: tuple[str, ...] = ()

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise EstimationError(f"non-finite {self.method} estimate", self.estimand)
        if self.method not in METHODS:
            raise EstimationError(f"unknown method {self.method!r}", self.estimand)


def _eid(e) -> str:
    v = e.value if isinstance(e, EstimandId) else str(e)
    if v not in ESTIMANDS:
        raise EstimationError(f"unknown estimand {v!r}; expected one of {ESTIMANDS}")
    return v


def plugin_value(estimand, nv: NuisanceValues) -> float:
    """Plug-in value of an estimand from evaluated nuisances."""
    e = _eid(estimand)
    if e == "psi0":
        rho0, mu01 = nv.require("rho0", "mu01", estimand=e)
        return nv.mean(rho0 * mu01) / guard(nv.rho0_bar, "rho0_bar", e)
    if e == "psi1_er":
        nv.require("rho0", "mu1", "mu00", estimand=e)
        return (nv.mu1_bar - nv.bar("uninf0_mu00")) / guard(nv.rho0_bar, "rho0_bar", e)
    if e in ("psi1_pi", "psi1_both"):
        other = "mu10" if e == "psi1_pi" else "mu_s0"
        rho0, rho1, mu11, m = nv.require("rho0", "rho1", "mu11", other, estimand=e)
        return nv.mean(rho1 * mu11 + (rho0 - rho1) * m) / guard(nv.rho0_bar, "rho0_bar", e)
    if e in ("eta1", "eta0"):
        mu = "mu11" if e == "eta1" else "mu01"
        rho1, m = nv.require("rho1", mu, estimand=e)
        return nv.mean(rho1 * m) / guard(nv.rho1_bar, "rho1_bar", e)
    if e == "marginal_mu1":
        nv.require("mu1", estimand=e)
        return nv.mu1_bar
    nv.require("rho0", "mu01", "mu00", estimand=e)
    return nv.bar("mu0")


def ipw_value(estimand, nv: NuisanceValues, z, s, y) -> float:
    """Inverse-probability-weighted value; ``nv.weights`` weight the rows.

    The marginal infection probabilities (``rho0_bar``, ``rho1_bar``) are the
    marginalized working-model values, as for the plug-in.
    """
    e = _eid(estimand)
    z = np.asarray(z, dtype=float)
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    if e == "psi0":
        (pi0,) = nv.require("pi0", estimand=e)
        return nv.mean(s * (1 - z) / pi0 * y) / guard(nv.rho0_bar, "rho0_bar", e)
    if e == "psi1_er":
        pi1, pi0 = nv.require("pi1", "pi0", estimand=e)
        return nv.mean(z / pi1 * y - (1 - z) * (1 - s) / pi0 * y) / guard(nv.rho0_bar, "rho0_bar", e)
    if e == "psi1_pi":
        pi1, rho0, rho1 = nv.require("pi1", "rho0", "rho1", estimand=e)
        w = z / pi1 * (s + (1 - s) * (rho0 - rho1) / (1 - rho1))
        return nv.mean(w * y) / guard(nv.rho0_bar, "rho0_bar", e)
    if e == "psi1_both":
        pi1, pi0, rho0, rho1 = nv.require("pi1", "pi0", "rho0", "rho1", estimand=e)
        p_uninf = pi0 * (1 - rho0) + pi1 * (1 - rho1)
        w = z * s / pi1 + (1 - s) / p_uninf * (rho0 - rho1)
        return nv.mean(w * y) / guard(nv.rho0_bar, "rho0_bar", e)
    if e == "eta1":
        (pi1,) = nv.require("pi1", estimand=e)
        return nv.mean(z * s / pi1 * y) / guard(nv.rho1_bar, "rho1_bar", e)
    if e == "eta0":
        pi0, rho0, rho1 = nv.require("pi0", "rho0", "rho1", estimand=e)
        return nv.mean((1 - z) * s / (pi0 * rho0) * rho1 * y) / guard(nv.rho1_bar, "rho1_bar", e)
    if e == "marginal_mu1":
        (pi1,) = nv.require("pi1", estimand=e)
        return nv.mean(z / pi1 * y)
    (pi0,) = nv.require("pi0", estimand=e)
    return nv.mean((1 - z) / pi0 * y)


def _check_rho0_positivity(nv: NuisanceValues, delta: float, estimand: str):
    if nv.rho0 is not None and np.any(nv.rho0 < delta):
        warn(W_POSITIVITY, f"{estimand}: rho0(x) below {delta} at some sample points")


def estimate(estimand, data: TrialData, nuis: NuisanceSet, method: str = "plugin") -> PointEstimate:
    """Point estimate of ``estimand`` by ``method`` (plugin, ipw or onestep)."""
    e = _eid(estimand)
    nv = nuis.values
    if e in ("psi1_pi", "psi1_both", "eta0"):
        _check_rho0_positivity(nv, nuis.delta, e)
    if method == "plugin":
        v = plugin_value(e, nv)
    elif method == "ipw":
        v = ipw_value(e, nv, data.z, data.s, data.y)
    elif method == "onestep":
        from .onestep import one_step

        v = one_step(e, data, nuis).point
    else:
        raise EstimationError(f"unknown method {method!r}", e)
    return PointEstimate(e, float(v), method, REQUIRED[e])


def psi0(data, nuis, method="plugin") -> PointEstimate:
    """E{Y(0) | S(0)=1}; identified without cross-world assumptions."""
    return estimate("psi0", data, nuis, method)


def psi1_er(data, nuis, method="plugin") -> PointEstimate:
    """E{Y(1) | S(0)=1} under the exclusion restriction."""
    return estimate("psi1_er", data, nuis, method)


def psi1_pi(data, nuis, method="plugin") -> PointEstimate:
    """E{Y(1) | S(0)=1} under partial principal ignorability."""
    return estimate("psi1_pi", data, nuis, method)


def psi1_both(data, nuis, method="plugin") -> PointEstimate:
    """E{Y(1) | S(0)=1} when both assumptions hold (uses the pooled mu_.0)."""
    return estimate("psi1_both", data, nuis, method)


def eta1(data, nuis, method="plugin") -> PointEstimate:
    """E{Y(1) | S(0)=S(1)=1}."""
    return estimate("eta1", data, nuis, method)


def eta0(data, nuis, method="plugin") -> PointEstimate:
    """E{Y(0) | S(0)=S(1)=1}; needs ignorability of S(1) for Y(0)."""
    return estimate("eta0", data, nuis, method)


def marginal_mean(data, nuis, z: int, method="plugin") -> PointEstimate:
    """E{Y(z)} over the whole population."""
    if z not in (0, 1):
        raise EstimationError("z must be 0 or 1", "marginal_mean")
    return estimate("marginal_mu1" if z == 1 else "marginal_mu0", data, nuis, method)


def stratum_probabilities(nuis) -> tuple[float, float, float]:
    """``(P_doomed, P_immune, P_protected) = (rho1_bar, 1 - rho0_bar, rho0_bar - rho1_bar)``.

    If ``rho0_bar < rho1_bar`` (monotonicity violated in the estimates) the
    Protected mass is set to 0, the other two are renormalized and a
    warning is issued. The result always sums to 1.
    """
    nv = nuis.values if isinstance(nuis, NuisanceSet) else nuis
    r0 = min(max(nv.rho0_bar, 0.0), 1.0)
    r1 = min(max(nv.rho1_bar, 0.0), 1.0)
    doomed, immune, protected = r1, 1.0 - r0, r0 - r1
    if protected < 0:
        warn(W_PROTECTED_CLAMP, f"rho0_bar={r0:.4g} < rho1_bar={r1:.4g}; Protected mass clamped to 0")
        d = doomed / (doomed + immune)
        return d, 1.0 - d, 0.0
    return doomed, immune, 1.0 - (doomed + immune)


EPS_DENOM_TOL = 1e-8


def eps_denominator(nv: NuisanceValues, epsilon: float, estimand: str = "psi1_pi_eps") -> np.ndarray:
    """``(1 - eps) rho0(x) - rho1(x) + eps``, checked away from zero."""
    rho0, rho1 = nv.require("rho0", "rho1", estimand=estimand)
    d = (1.0 - epsilon) * rho0 - rho1 + epsilon
    bad = np.flatnonzero(np.abs(d) < EPS_DENOM_TOL)
    if bad.size:
        raise EstimationError(
            f"denominator (1-eps)rho0 - rho1 + eps degenerate at point {int(bad[0])} for eps={epsilon}", estimand)
    return d


def psi1_eps_plugin(nv: NuisanceValues, epsilon: float) -> float:
    """Plug-in value of the sensitivity functional.

    With ``eps`` the ratio of the Immune to the Protected mean of Y(1) given
    X, the Protected mean is ``mu10 (1 - rho1) / D`` where
    ``D = (1 - eps) rho0 - rho1 + eps``; ``eps = 1`` recovers ``psi1_pi``.
    """
    if not epsilon > 0:
        raise EstimationError(f"epsilon must be positive, got {epsilon}", "psi1_pi_eps")
    rho0, rho1, mu11, mu10 = nv.require("rho0", "rho1", "mu11", "mu10", estimand="psi1_pi_eps")
    d = eps_denominator(nv, epsilon)
    h = rho1 * mu11 + (rho0 - rho1) * (1.0 - rho1) / d * mu10
    return nv.mean(h) / guard(nv.rho0_bar, "rho0_bar", "psi1_pi_eps")
