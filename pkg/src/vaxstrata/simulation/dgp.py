"""Data-generating processes with full principal-stratum potential outcomes.

Two studies are provided:

``asymptotics``
    Three Bernoulli(0.5) covariates, stratum and outcome logits with the
    exclusion restriction / principal ignorability knobs ``eps_I`` and
    ``eps_P``, and a covariate-dependent (confounded) vaccine assignment.

``provide_calibrated``
    A binary, a normal and a zero-truncated negative binomial covariate,
    softmax strata shifted by ``delta_I`` / ``delta_P``, outcome effects
    ``eta_D`` / ``eta_P`` on the logit scale and randomized assignment.

Strata are coded 0 = Doomed (S(0)=S(1)=1), 1 = Protected (S(0)=1, S(1)=0),
2 = Immune (S(0)=S(1)=0). Potential outcomes share one uniform draw per
participant, so ``Y(1) = Y(0)`` whenever their probabilities coincide.
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, fields

import numpy as np

from .._numerics import expit, logit
from ..dataset import TrialData
from ..diagnostics import ConfigError
from ..rng import DOMAIN_GENERATE, StreamKey

STUDIES = ("asymptotics", "provide_calibrated")
DOOMED, PROTECTED, IMMUNE = 0, 1, 2
STRATUM_NAMES = ("Doomed", "Protected", "Immune")

# provide_calibrated covariate laws
X2_MEAN, X2_SD = -0.97, 0.90
X3_MEAN = 5.26


@dataclass(frozen=True)
class DgpSpec:
    """Generative specification of one simulation setting.

    Parameters
    ----------
    study : {"asymptotics", "provide_calibrated"}
    n : int
        Sample size.
    eps_I, eps_P : float
        ``asymptotics`` only. Scale the Immune Y(1) probability (``eps_I``,
        exclusion restriction holds at 1) and the Protected Y(1) probability
        relative to the Immune one (``eps_P``, principal ignorability holds at 1).
    delta_I, delta_P, eta_D, eta_P : float
        ``provide_calibrated`` only: stratum-composition shifts and
        outcome-effect parameters.
    seed : int
        Base seed.
    randomized : bool
        ``asymptotics`` only: assign Z ~ Bernoulli(0.5) instead of the
        covariate-dependent assignment.
    nb_variance_ratio : float
        Variance-to-mean ratio of the negative binomial covariate before
        truncation (must exceed 1).
    """

    study: str = "asymptotics"
    n: int = 4000
    eps_I: float = 1.0
    eps_P: float = 1.0
    delta_I: float = 0.0
    delta_P: float = 0.0
    eta_D: float = 0.0
    eta_P: float = 0.0
    seed: int = 0
    randomized: bool = False
    nb_variance_ratio: float = 2.0

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ConfigError(f"unknown study {self.study!r}; expected one of {STUDIES}")
        if int(self.n) < 1:
            raise ConfigError("n must be positive")
        for f in ("eps_I", "eps_P", "delta_I", "delta_P", "eta_D", "eta_P", "nb_variance_ratio"):
            if not np.isfinite(getattr(self, f)):
                raise ConfigError(f"{f} must be finite")
        if self.nb_variance_ratio <= 1.0:
            raise ConfigError("nb_variance_ratio must exceed 1")
        if self.study == "asymptotics" and (self.eps_I < 0 or self.eps_P < 0):
            raise ConfigError("eps_I and eps_P must be non-negative")

    def with_(self, **kw) -> "DgpSpec":
        d = asdict(self)
        d.update(kw)
        return DgpSpec(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "DgpSpec":
        names = {f.name for f in fields(cls)}
        extra = set(d) - names
        if extra:
            raise ConfigError(f"unknown DGP keys {sorted(extra)}")
        return cls(**d)


def asymptotics_probabilities(x: np.ndarray, eps_I: float = 1.0, eps_P: float = 1.0,
                              randomized: bool = False) -> dict:
    """Stratum, outcome and assignment probabilities of the binary-covariate study."""
    x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
    pD = expit(-1 + 0.5 * x1 - x1 * x2 - 0.5 * x3)
    pI = expit(-1 + 0.5 * x1 - x1 * x3 - 0.5 * x3)
    pP = 1.0 - pD - pI
    y0D = expit(-1 + 0.5 * x1 - x1 * x2 + 0.5 * x3)
    y1D = expit(logit(y0D) + 0.1)
    y0I = expit(-0.5 + 0.5 * x1 - x1 * x3 + 0.5 * x2)
    y1I = eps_I * y0I
    y0P = y0D
    y1P = eps_P * y1I
    pi1 = np.full(x.shape[0], 0.5) if randomized else expit(-0.14 - 0.5 * x1 + x1 * x2 - 1.2 * x3)
    return {
        "strata": np.column_stack([pD, pP, pI]),
        "y0": np.column_stack([y0D, y0P, y0I]),
        "y1": np.column_stack([y1D, y1P, y1I]),
        "pi1": pi1,
    }


def provide_probabilities(x: np.ndarray, delta_I: float = 0.0, delta_P: float = 0.0,
                          eta_D: float = 0.0, eta_P: float = 0.0) -> dict:
    """Stratum and outcome probabilities of the calibrated study (Z randomized)."""
    x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
    gD = -1.2 + 0.81 * x1 + 0.18 * x2 + 0.06 * x3 + delta_P
    gI = 1.5 - 0.30 * x1 + 0.10 * x2 - 0.08 * x3 + delta_I + delta_P
    m = np.maximum(np.maximum(gD, gI), 0.0)
    eD, eI, eP = np.exp(gD - m), np.exp(gI - m), np.exp(-m)
    den = eD + eI + eP
    y1D = expit(-0.70 + 0.78 * x1 - 1.44 * x2 + 0.49 * x3)
    y0D = expit(logit(y1D) - eta_D)
    y0P = y0D
    y1P = expit(logit(y0P) + eta_P)
    y1I = y1P
    y0I = y1I
    return {
        "strata": np.column_stack([eD / den, eP / den, eI / den]),
        "y0": np.column_stack([y0D, y0P, y0I]),
        "y1": np.column_stack([y1D, y1P, y1I]),
        "pi1": np.full(x.shape[0], 0.5),
    }


def probabilities(spec: DgpSpec, x: np.ndarray) -> dict:
    if spec.study == "asymptotics":
        return asymptotics_probabilities(x, spec.eps_I, spec.eps_P, spec.randomized)
    return provide_probabilities(x, spec.delta_I, spec.delta_P, spec.eta_D, spec.eta_P)


def _zt_negbin(rng: np.random.Generator, size: int, mean: float, ratio: float) -> np.ndarray:
    # numpy parameterization: mean = r (1-p)/p, var = mean / p
    p = 1.0 / ratio
    r = mean * p / (1.0 - p)
    out = rng.negative_binomial(r, p, size=size).astype(float)
    zero = np.flatnonzero(out == 0)
    while zero.size:  # zero truncation by rejection
        out[zero] = rng.negative_binomial(r, p, size=zero.size)
        zero = zero[out[zero] == 0]
    return out


def draw_covariates(spec: DgpSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    if spec.study == "asymptotics":
        return (rng.random((n, 3)) < 0.5).astype(float)
    x1 = (rng.random(n) < 0.5).astype(float)
    x2 = rng.normal(X2_MEAN, X2_SD, size=n)
    x3 = _zt_negbin(rng, n, X3_MEAN, spec.nb_variance_ratio)
    return np.column_stack([x1, x2, x3])


COVARIATE_NAMES = {"asymptotics": ("x1", "x2", "x3"), "provide_calibrated": ("x1", "x2", "x3")}


@dataclass(frozen=True, eq=False)
class PotentialLedger:
    """All potential outcomes of a simulated sample (column arrays)."""

    x: np.ndarray
    stratum: np.ndarray
    s0: np.ndarray
    s1: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    z: np.ndarray
    s: np.ndarray
    y: np.ndarray

    def row(self, i: int) -> "PotentialRow":
        return PotentialRow(tuple(float(v) for v in self.x[i]), STRATUM_NAMES[int(self.stratum[i])],
                            int(self.s0[i]), int(self.s1[i]), float(self.y0[i]), float(self.y1[i]),
                            int(self.z[i]), int(self.s[i]), float(self.y[i]))

    def consistent(self) -> bool:
        s_ok = np.all(self.s == np.where(self.z == 1, self.s1, self.s0))
        y_ok = np.all(self.y == np.where(self.z == 1, self.y1, self.y0))
        return bool(s_ok and y_ok)

    def monotone(self) -> bool:
        return not bool(np.any((self.s1 == 1) & (self.s0 == 0)))


@dataclass(frozen=True)
class PotentialRow:
    x: tuple[float, ...]
    stratum: str
    s0: int
    s1: int
    y0: float
    y1: float
    z: int
    s: int
    y: float


def draw_potential(spec: DgpSpec, rng: np.random.Generator, n: int) -> PotentialLedger:
    """Draw ``n`` participants with all potential outcomes."""
    x = draw_covariates(spec, rng, n)
    pr = probabilities(spec, x)
    cum = np.cumsum(pr["strata"], axis=1)
    u = rng.random(n)
    stratum = (u[:, None] >= cum[:, :2]).sum(axis=1).astype(np.int8)
    s0 = (stratum != IMMUNE).astype(np.int8)
    s1 = (stratum == DOOMED).astype(np.int8)
    uy = rng.random(n)
    idx = np.arange(n)
    y0 = (uy < pr["y0"][idx, stratum]).astype(float)
    y1 = (uy < pr["y1"][idx, stratum]).astype(float)
    z = (rng.random(n) < pr["pi1"]).astype(np.int8)
    s = np.where(z == 1, s1, s0).astype(np.int8)
    y = np.where(z == 1, y1, y0)
    return PotentialLedger(x, stratum, s0, s1, y0, y1, z, s, y)


def generate(spec: DgpSpec, ledger: bool = False, key: StreamKey | None = None,
             rng: np.random.Generator | None = None):
    """Simulate a trial of size ``spec.n``.

    Parameters
    ----------
    spec : DgpSpec
    ledger : bool
        Also return the :class:`PotentialLedger`.
    key, rng : optional
        Random source; defaults to the stream ``(spec.seed, generate)``.

    Returns
    -------
    TrialData or (TrialData, PotentialLedger)
    """
    if rng is None:
        rng = (key or StreamKey(spec.seed, (DOMAIN_GENERATE,))).generator()
    led = draw_potential(spec, rng, int(spec.n))
    data = TrialData(led.x, led.z, led.s, led.y, COVARIATE_NAMES[spec.study])
    return (data, led) if ledger else data


def asymptotics_support() -> np.ndarray:
    """The eight covariate points of the binary-covariate study."""
    return np.array(list(itertools.product((0.0, 1.0), repeat=3)))


def true_nuisances(spec: DgpSpec, x: np.ndarray) -> dict:
    """Closed-form observed-data nuisances at ``x`` (any study).

    Returns a dict with keys ``pi1, pi0, rho0, rho1, mu01, mu00, mu11, mu10,
    mu1, mu_s0`` suitable for :class:`~vaxstrata.nuisance.NuisanceValues`.
    """
    pr = probabilities(spec, x)
    pD, pP, pI = pr["strata"].T
    y0D, y0P, y0I = pr["y0"].T
    y1D, y1P, y1I = pr["y1"].T
    pi1 = pr["pi1"]
    rho0 = pD + pP
    rho1 = pD
    mu01 = (pD * y0D + pP * y0P) / rho0
    mu00 = y0I
    mu11 = y1D
    mu10 = (pP * y1P + pI * y1I) / (pP + pI)
    mu1 = rho1 * mu11 + (1 - rho1) * mu10
    pi0 = 1 - pi1
    num = pi0 * (1 - rho0) * mu00 + pi1 * (1 - rho1) * mu10
    mu_s0 = num / (pi0 * (1 - rho0) + pi1 * (1 - rho1))
    return dict(pi1=pi1, pi0=pi0, rho0=rho0, rho1=rho1, mu01=mu01, mu00=mu00, mu11=mu11, mu10=mu10,
                mu1=mu1, mu_s0=mu_s0)
