"""Ground-truth causal quantities of a :class:`~vaxstrata.simulation.dgp.DgpSpec`.

Every field of a :class:`TruthRecord` is a ratio of population means
``E(A) / E(B)`` of potential-outcome functionals. Exact mode evaluates the
means by enumerating the covariate support; Monte Carlo mode averages a
potential-outcome ledger and reports delta-method standard errors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..diagnostics import ConfigError
from ..rng import DOMAIN_TRUTH, StreamKey
from .dgp import DOOMED, IMMUNE, PROTECTED, DgpSpec, asymptotics_support, draw_potential, probabilities

FIELDS = (
    "psi1", "psi0", "additive", "multiplicative",
    "doomed_mu1", "doomed_mu0", "doomed_rd", "protected_mu1", "protected_mu0", "protected_rd",
    "marginal_mu1", "marginal_mu0", "marginal_rd",
    "p_doomed", "p_protected", "p_immune", "ve",
)


@dataclass(frozen=True)
class TruthRecord:
    """True effects of one DGP setting.

    ``psi1``/``psi0`` are E{Y(z) | S(0)=1}; ``doomed_*`` and ``protected_*``
    condition on the stratum; ``ve = 1 - P{S(1)=1} / P{S(0)=1}``.
    ``provenance`` is ``"exact_enumeration"`` or ``"monte_carlo"``, in which
    case ``draws`` and per-field ``se`` are filled.
    """

    psi1: float
    psi0: float
    additive: float
    multiplicative: float
    doomed_mu1: float
    doomed_mu0: float
    doomed_rd: float
    protected_mu1: float
    protected_mu0: float
    protected_rd: float
    marginal_mu1: float
    marginal_mu0: float
    marginal_rd: float
    p_doomed: float
    p_protected: float
    p_immune: float
    ve: float
    provenance: str = "exact_enumeration"
    draws: int | None = None
    se: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {f: getattr(self, f) for f in FIELDS}
        d.update(provenance=self.provenance, draws=self.draws, se=dict(self.se))
        return d

    def effect(self, scale: str) -> float:
        return self.additive if scale == "additive" else self.multiplicative


def _components(ps, y0, y1) -> dict:
    """Per-unit (numerator, denominator) terms of every field.

    ``ps`` holds stratum indicators or probabilities (columns D, P, I);
    ``y0``/``y1`` the matching outcome values or probabilities.
    """
    d, p, i = ps[:, DOOMED], ps[:, PROTECTED], ps[:, IMMUNE]
    a1 = d * y1[:, DOOMED] + p * y1[:, PROTECTED]
    a0 = d * y0[:, DOOMED] + p * y0[:, PROTECTED]
    m1 = a1 + i * y1[:, IMMUNE]
    m0 = a0 + i * y0[:, IMMUNE]
    ni = d + p
    one = np.ones_like(d)
    return {
        "psi1": (a1, ni), "psi0": (a0, ni), "additive": (a1 - a0, ni), "multiplicative": (a1, a0),
        "doomed_mu1": (d * y1[:, DOOMED], d), "doomed_mu0": (d * y0[:, DOOMED], d),
        "doomed_rd": (d * (y1[:, DOOMED] - y0[:, DOOMED]), d),
        "protected_mu1": (p * y1[:, PROTECTED], p), "protected_mu0": (p * y0[:, PROTECTED], p),
        "protected_rd": (p * (y1[:, PROTECTED] - y0[:, PROTECTED]), p),
        "marginal_mu1": (m1, one), "marginal_mu0": (m0, one), "marginal_rd": (m1 - m0, one),
        "p_doomed": (d, one), "p_protected": (p, one), "p_immune": (i, one),
        "ve": (d, ni),  # stored as the ratio, converted to 1 - ratio
    }


def _ratio(a: float, b: float) -> float:
    return a / b if b != 0 else float("nan")


def truth_exact(spec: DgpSpec) -> TruthRecord:
    """Exact truth by enumerating the eight-point covariate support.

    Raises
    ------
    ConfigError
        For the ``provide_calibrated`` study, whose covariates are continuous.
    """
    if spec.study != "asymptotics":
        raise ConfigError("exact truth requires a finite covariate support; use monte_carlo mode")
    x = asymptotics_support()
    pr = probabilities(spec, x)
    comps = _components(pr["strata"], pr["y0"], pr["y1"])
    vals = {k: _ratio(math.fsum(a.tolist()), math.fsum(b.tolist())) for k, (a, b) in comps.items()}
    vals["ve"] = 1.0 - vals["ve"]
    return TruthRecord(**vals, provenance="exact_enumeration")


class _Accumulator:
    """Streaming sums for ratio-of-means estimates and their delta-method SEs."""

    def __init__(self):
        self.n = 0
        self.sums = {}

    def add(self, comps: dict):
        self.n += next(iter(comps.values()))[0].shape[0]
        for k, (a, b) in comps.items():
            s = self.sums.setdefault(k, [0.0] * 5)
            for j, v in enumerate((a, b, a * a, b * b, a * b)):
                s[j] += math.fsum(v.tolist())

    def result(self, k: str) -> tuple[float, float]:
        sa, sb, saa, sbb, sab = self.sums[k]
        n = self.n
        ma, mb = sa / n, sb / n
        r = ma / mb
        va, vb, cab = saa / n - ma * ma, sbb / n - mb * mb, sab / n - ma * mb
        var = (va - 2 * r * cab + r * r * vb) / (mb * mb)
        return r, math.sqrt(max(var, 0.0) / n)


def truth_monte_carlo(spec: DgpSpec, draws: int = 10_000_000, seed: int | None = None,
                      chunk: int = 1_000_000) -> TruthRecord:
    """Monte Carlo truth from realized potential outcomes of ``draws`` units.

    The sample is drawn in chunks, each from its own stream, so results do
    not depend on available memory beyond the chunk size.
    """
    if draws < 2:
        raise ConfigError("draws must be at least 2")
    key = StreamKey(spec.seed if seed is None else int(seed), (DOMAIN_TRUTH,))
    acc = _Accumulator()
    for c, start in enumerate(range(0, draws, chunk)):
        m = min(chunk, draws - start)
        led = draw_potential(spec, key.child(c).generator(), m)
        ind = np.zeros((m, 3))
        ind[np.arange(m), led.stratum] = 1.0
        y0 = np.repeat(led.y0[:, None], 3, axis=1)
        y1 = np.repeat(led.y1[:, None], 3, axis=1)
        acc.add(_components(ind, y0, y1))
    vals, ses = {}, {}
    for k in FIELDS:
        vals[k], ses[k] = acc.result(k)
    vals["ve"] = 1.0 - vals["ve"]
    return TruthRecord(**vals, provenance="monte_carlo", draws=int(draws), se=ses)


def truth(spec: DgpSpec, mode: str = "exact", draws: int = 10_000_000, seed: int | None = None) -> TruthRecord:
    """Truth for ``spec`` in ``mode`` ``"exact"`` or ``"monte_carlo"``."""
    if mode == "exact":
        return truth_exact(spec)
    if mode == "monte_carlo":
        return truth_monte_carlo(spec, draws, seed)
    raise ConfigError(f"unknown truth mode {mode!r}")


def rd_mapping(base: DgpSpec, eta_d=(0.0, -0.5, -1.0, -1.5, -2.0, -2.5, -3.0),
               eta_p=(0.0, -0.5, -1.0, -1.5, -2.0, -2.5, -3.0), draws: int = 1_000_000,
               seed: int | None = None) -> dict:
    """Stratum risk differences as functions of the outcome-effect parameters.

    ``RD_D`` varies ``eta_D`` with ``eta_P = 0``; ``RD_P`` varies ``eta_P``
    with ``eta_D = 0`` (the Protected placebo risk follows the Doomed one).
    All settings share one covariate sample.
    """
    rd_d = [truth_monte_carlo(base.with_(eta_D=float(e), eta_P=0.0), draws, seed).doomed_rd for e in eta_d]
    rd_p = [truth_monte_carlo(base.with_(eta_D=0.0, eta_P=float(e)), draws, seed).protected_rd for e in eta_p]
    return {"eta_D": list(map(float, eta_d)), "RD_D": rd_d, "eta_P": list(map(float, eta_p)), "RD_P": rd_p}


@dataclass(frozen=True)
class PopulationBounds:
    """Probability limits of the (optionally adjusted) bound estimators."""

    lower: float
    upper: float
    psi0: float
    q: float
    covariates: tuple[str, ...] = ()

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def effect_additive(self) -> tuple[float, float]:
        return self.lower - self.psi0, self.upper - self.psi0


def _binary_trim(q: float, mu10: float) -> tuple[float, float]:
    if q <= 0:
        return mu10, mu10
    return max(0.0, q - (1.0 - mu10)) / q, min(mu10, q) / q


def population_bounds(spec: DgpSpec, covariates: tuple = ()) -> PopulationBounds:
    """Exact limits of the trimming-bound estimators for the binary-covariate study.

    Cell fractions are the arm-conditional limits of the raw empirical
    fractions, so a covariate-dependent assignment is reflected exactly as
    the estimators see it. Adjusted limits average per-cell bounds with
    weights P(X = x).
    """
    if spec.study != "asymptotics":
        raise ConfigError("population bounds are available in closed form only for the asymptotics study")
    from .dgp import COVARIATE_NAMES, true_nuisances

    names = COVARIATE_NAMES[spec.study]
    idx = [names.index(c) if isinstance(c, str) else int(c) for c in covariates]
    x = asymptotics_support()
    px = np.full(x.shape[0], 1.0 / x.shape[0])
    tn = true_nuisances(spec, x)
    pi1, pi0 = tn["pi1"], tn["pi0"]

    def cell(mask):
        w1, w0 = px[mask] * pi1[mask], px[mask] * pi0[mask]
        r1, r0 = tn["rho1"][mask], tn["rho0"][mask]
        rho1 = (w1 * r1).sum() / w1.sum()
        rho0 = (w0 * r0).sum() / w0.sum()
        mu11 = (w1 * r1 * tn["mu11"][mask]).sum() / (w1 * r1).sum()
        mu10 = (w1 * (1 - r1) * tn["mu10"][mask]).sum() / (w1 * (1 - r1)).sum()
        mu01 = (w0 * r0 * tn["mu01"][mask]).sum() / (w0 * r0).sum()
        q = min(max((rho0 - rho1) / (1 - rho1), 0.0), 1.0)
        low, high = _binary_trim(q, mu10)
        wd = min(rho1 / rho0, 1.0)
        return wd * mu11 + (1 - wd) * low, wd * mu11 + (1 - wd) * high, mu01, q

    whole = cell(np.ones(x.shape[0], dtype=bool))
    if not idx:
        lo, hi, psi0, q = whole
        return PopulationBounds(float(lo), float(hi), float(psi0), float(q))
    keys = [tuple(r) for r in x[:, idx]]
    lo = hi = qq = 0.0
    for k in sorted(set(keys)):
        m = np.array([kk == k for kk in keys])
        l, u, _, q = cell(m)
        w = px[m].sum()
        lo, hi, qq = lo + w * l, hi + w * u, qq + w * q
    return PopulationBounds(float(lo), float(hi), float(whole[2]), float(qq), tuple(names[j] for j in idx))
