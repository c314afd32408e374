"""Multiple-robustness experiments.

Each replicate fits two nuisance sets on the same data: a consistent one
(saturated models) and a misspecified one (intercept-only logistic
models). A *combination* names the nuisances taken from the consistent
set; all others come from the misspecified set. The one-step estimator is
then evaluated for every combination on the same data, so differences
between combinations are not blurred by sampling noise.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from .._numerics import wmean
from ..diagnostics import ConfigError, VaxError
from ..nuisance import NuisanceValues, fit_nuisance_set, nuisance_set_from_values
from ..onestep import one_step
from ..parallel import pmap
from ..rng import DOMAIN_STUDY, StreamKey
from .dgp import DgpSpec, generate, true_nuisances
from .study import TRUTH_FIELD
from .truth import truth

CONSISTENT = {"default": {"family": "saturated"}}
MISSPECIFIED = {"default": {"family": "logistic", "covariates": []}}

#: nuisances each estimand's one-step estimator depends on
DEPENDS = {
    "psi0": ("pi0", "rho0", "mu01"),
    "psi1_er": ("pi1", "pi0", "rho0", "mu1"),
    "psi1_pi": ("pi1", "pi0", "rho1", "rho0", "mu11", "mu10"),
}

#: minimal consistent combinations, field names as in NuisanceValues
MINIMAL = {
    "psi0": (("pi0",), ("rho0", "mu01")),
    "psi1_er": (("pi1", "pi0"), ("pi1", "rho0"), ("pi0", "mu1"), ("rho0", "mu1")),
    "psi1_pi": (
        ("pi1", "rho1", "rho0"),
        ("pi1", "pi0", "rho1", "mu10"),
        ("pi1", "rho0", "mu11", "mu10"),
        ("pi1", "pi0", "mu11", "mu10"),
        ("rho1", "rho0", "mu11", "mu10"),
        ("pi0", "rho1", "mu11", "mu10"),
    ),
}

#: combinations when the propensity is known (randomized-trial analysis)
MINIMAL_RCT = {"psi1_pi": (("rho1", "rho0"), ("rho1", "mu10"), ("mu11", "mu10"))}

# nuisances outside an estimand's combination table, held consistent
HELD = {"psi1_er": ("mu00",)}


@dataclass(frozen=True)
class Combination:
    estimand: str
    consistent: tuple[str, ...]
    known_propensity: bool = False
    label: str = ""

    def name(self) -> str:
        c = "+".join(self.consistent) or "none"
        return self.label or f"{self.estimand}[{c}]{'(known pi)' if self.known_propensity else ''}"


def mix(good: NuisanceValues, bad: NuisanceValues, consistent: Sequence[str]) -> NuisanceValues:
    """Values with ``consistent`` fields from ``good`` and the rest from ``bad``."""
    kw = {f: getattr(good if f in consistent else bad, f) for f in NuisanceValues.FIELDS}
    return NuisanceValues(**kw)


@dataclass(frozen=True)
class _Task:
    spec: DgpSpec
    replicate: int
    seed: int
    combos: tuple
    good: Mapping
    bad: Mapping


def _run(task: _Task):
    key = StreamKey(task.seed, (DOMAIN_STUDY, 99, task.replicate))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            data = generate(task.spec, rng=key.child(0).generator())
            good = fit_nuisance_set(data, task.good).values
            bad = fit_nuisance_set(data, task.bad).values
        except VaxError:
            return [math.nan] * len(task.combos)
        pi_true = None
        if any(c.known_propensity for c in task.combos):
            pi_true = true_nuisances(task.spec, data.x)["pi1"]
        out = []
        for c in task.combos:
            cons = tuple(c.consistent) + HELD.get(c.estimand, ())
            nv = mix(good, bad, cons)
            if c.known_propensity:
                nv = nv.replace(pi1=pi_true, pi0=1.0 - pi_true)
            try:
                out.append(one_step(c.estimand, data, nuisance_set_from_values(nv)).point)
            except VaxError:
                out.append(math.nan)
    return out


@dataclass(frozen=True)
class CombinationResult:
    combination: str
    estimand: str
    consistent: tuple[str, ...]
    known_propensity: bool
    truth: float
    replicates: int
    bias: float
    mc_se: float
    sd: float

    def to_dict(self) -> dict:
        return asdict(self)


def robustness_study(spec: DgpSpec, combos: Sequence[Combination], replicates: int, seed: int = 0,
                     workers: int = 1, good: Mapping = CONSISTENT, bad: Mapping = MISSPECIFIED) -> list:
    """Bias of the one-step estimator under each nuisance combination.

    Returns
    -------
    list of CombinationResult
        ``mc_se`` is the Monte Carlo standard error of ``bias``.
    """
    if spec.study != "asymptotics":
        raise ConfigError("robustness experiments use the binary-covariate study (saturated models)")
    combos = tuple(combos)
    tr = truth(spec, "exact")
    tasks = [_Task(spec, r, int(seed), combos, good, bad) for r in range(int(replicates))]
    arr = np.array(pmap(_run, tasks, workers), dtype=float).reshape(len(tasks), len(combos))
    out = []
    for j, c in enumerate(combos):
        t = getattr(tr, TRUTH_FIELD[c.estimand])
        v = arr[:, j]
        v = v[np.isfinite(v)]
        e = v - t
        m = wmean(e) if e.size else math.nan
        sd = math.sqrt(wmean((e - m) ** 2)) if e.size else math.nan
        out.append(CombinationResult(c.name(), c.estimand, tuple(c.consistent), c.known_propensity, t,
                                     int(e.size), m, sd / math.sqrt(max(e.size, 1)), sd))
    return out


def minimal_combinations() -> list[Combination]:
    """Every listed minimal combination, plus the all-consistent reference per estimand."""
    out = []
    for est, rows in MINIMAL.items():
        out.append(Combination(est, DEPENDS[est], label=f"{est}[all]"))
        out.extend(Combination(est, r) for r in rows)
    for est, rows in MINIMAL_RCT.items():
        out.extend(Combination(est, r, known_propensity=True) for r in rows)
    return out
