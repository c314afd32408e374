"""Shared fixtures.

``Discrete`` is an independent enumeration oracle: a fully specified joint
law of (X, Z, S, Y) on a finite support whose functionals are computed
directly from conditional probabilities, with no package code involved.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from vaxstrata import TrialData
from vaxstrata.nuisance import NuisanceValues

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


class Discrete:
    """Joint law ``p(x) p(z|x) p(s|z,x) p(y|z,s,x)`` on a finite grid.

    Parameters
    ----------
    px : (K,) covariate cell probabilities
    pz : (K,) P(Z=1 | x)
    ps : (K, 2) P(S=1 | z, x)
    py : (K, 2, 2, L) P(Y = yvals[l] | z, s, x)
    yvals : (L,) outcome support
    xvals : (K, p) covariate values of the cells
    """

    def __init__(self, px, pz, ps, py, yvals, xvals):
        self.px, self.pz, self.ps, self.py = map(np.asarray, (px, pz, ps, py))
        self.yvals = np.asarray(yvals, dtype=float)
        self.xvals = np.asarray(xvals, dtype=float)

    # -- support ------------------------------------------------------------
    def atoms(self):
        """Arrays (k, z, s, l, weight) over every support point."""
        K, L = len(self.px), len(self.yvals)
        rows = list(itertools.product(range(K), (0, 1), (0, 1), range(L)))
        k, z, s, l = (np.array(c) for c in zip(*rows))
        pzk = np.where(z == 1, self.pz[k], 1 - self.pz[k])
        psk = np.where(s == 1, self.ps[k, z], 1 - self.ps[k, z])
        w = self.px[k] * pzk * psk * self.py[k, z, s, l]
        return k, z, s, l, w

    # -- conditionals -------------------------------------------------------
    def mu(self, z, s):
        return self.py[:, z, s, :] @ self.yvals

    def rho(self, z):
        return self.ps[:, z]

    def mu_arm(self, z):
        r = self.rho(z)
        return r * self.mu(z, 1) + (1 - r) * self.mu(z, 0)

    def mu_s0(self):
        w0 = (1 - self.pz) * (1 - self.rho(0))
        w1 = self.pz * (1 - self.rho(1))
        return (w0 * self.mu(0, 0) + w1 * self.mu(1, 0)) / (w0 + w1)

    def E(self, v) -> float:
        return float(np.dot(self.px, v))

    # -- functionals --------------------------------------------------------
    def psi0(self):
        return self.E(self.rho(0) * self.mu(0, 1)) / self.E(self.rho(0))

    def psi1_er(self):
        return (self.E(self.mu_arm(1)) - self.E((1 - self.rho(0)) * self.mu(0, 0))) / self.E(self.rho(0))

    def _pi_form(self, m):
        r0, r1 = self.rho(0), self.rho(1)
        return self.E(r1 * self.mu(1, 1) + (r0 - r1) * m) / self.E(r0)

    def psi1_pi(self):
        return self._pi_form(self.mu(1, 0))

    def psi1_both(self):
        return self._pi_form(self.mu_s0())

    def eta1(self):
        return self.E(self.rho(1) * self.mu(1, 1)) / self.E(self.rho(1))

    def eta0(self):
        return self.E(self.rho(1) * self.mu(0, 1)) / self.E(self.rho(1))

    def marginal_mu1(self):
        return self.E(self.mu_arm(1))

    def marginal_mu0(self):
        return self.E(self.mu_arm(0))

    def psi1_eps(self, eps):
        r0, r1 = self.rho(0), self.rho(1)
        prot_mean = self.mu(1, 0) * (1 - r1) / ((1 - eps) * r0 - r1 + eps)
        return self.E(r1 * self.mu(1, 1) + (r0 - r1) * prot_mean) / self.E(r0)

    def value(self, name, eps=None):
        return self.psi1_eps(eps) if name == "psi1_eps" else getattr(self, name)()

    # -- package-facing views -----------------------------------------------
    def nuisance_values(self) -> NuisanceValues:
        """True nuisances at every atom, weighted by the atom probabilities."""
        k, z, s, l, w = self.atoms()
        return NuisanceValues(
            pi1=self.pz[k], pi0=1 - self.pz[k], rho0=self.rho(0)[k], rho1=self.rho(1)[k],
            mu01=self.mu(0, 1)[k], mu00=self.mu(0, 0)[k], mu11=self.mu(1, 1)[k], mu10=self.mu(1, 0)[k],
            mu1=self.mu_arm(1)[k], mu_s0=self.mu_s0()[k], weights=w,
        )

    def observed(self):
        k, z, s, l, w = self.atoms()
        return z, s, self.yvals[l], w

    def sample(self, n: int, rng: np.random.Generator) -> TrialData:
        k, z, s, l, w = self.atoms()
        idx = rng.choice(len(w), size=n, p=w / w.sum())
        return TrialData(self.xvals[k[idx]], z[idx], s[idx], self.yvals[l[idx]])

    # -- parametric submodels ------------------------------------------------
    def tilt(self, scores, eps: float, restrict_s0: bool = False) -> "Discrete":
        """Product submodel with factor scores ``(a, b, c, d)``.

        ``a[k]``, ``b[k, z]``, ``c[k, z, s]`` and ``d[k, z, s, l]`` are
        centred within their conditional law here, so the tilted law is a
        proper distribution for small ``eps``. With ``restrict_s0`` the
        outcome score on S=0 ignores z, keeping Y independent of Z given
        S=0 and X when the base law has that property.
        """
        a, b, c, d = (np.array(v, dtype=float) for v in scores)
        K = len(self.px)
        a = a - np.dot(self.px, a)
        pz2 = np.stack([1 - self.pz, self.pz], axis=1)
        b = b - (pz2 * b).sum(axis=1, keepdims=True)
        ps2 = np.stack([1 - self.ps, self.ps], axis=2)
        c = c - (ps2 * c).sum(axis=2, keepdims=True)
        if restrict_s0:
            d[:, 1, 0, :] = d[:, 0, 0, :]
        d = d - (self.py * d).sum(axis=3, keepdims=True)
        px = self.px * (1 + eps * a)
        pz = self.pz * (1 + eps * b[:, 1])
        ps = self.ps * (1 + eps * c[:, :, 1])
        py = self.py * (1 + eps * d)
        del K
        return Discrete(px, pz, ps, py, self.yvals, self.xvals)

    def score_at_atoms(self, scores, restrict_s0: bool = False) -> np.ndarray:
        """The score ``a + b + c + d`` (centred as in :meth:`tilt`) at each atom."""
        a, b, c, d = (np.array(v, dtype=float) for v in scores)
        a = a - np.dot(self.px, a)
        pz2 = np.stack([1 - self.pz, self.pz], axis=1)
        b = b - (pz2 * b).sum(axis=1, keepdims=True)
        ps2 = np.stack([1 - self.ps, self.ps], axis=2)
        c = c - (ps2 * c).sum(axis=2, keepdims=True)
        if restrict_s0:
            d[:, 1, 0, :] = d[:, 0, 0, :]
        d = d - (self.py * d).sum(axis=3, keepdims=True)
        k, z, s, l, _ = self.atoms()
        return a[k] + b[k, z] + c[k, z, s] + d[k, z, s, l]


def make_discrete(seed: int = 3, satisfy_s0_independence: bool = False, monotone: bool = True) -> Discrete:
    """Random positive law on two binary covariates and Y in {0, 1, 2.5}."""
    rng = np.random.default_rng(seed)
    xvals = np.array(list(itertools.product((0, 1), (0, 1))), dtype=float)
    K, L = 4, 3
    px = rng.dirichlet(np.full(K, 5.0))
    pz = rng.uniform(0.3, 0.7, K)
    ps = np.empty((K, 2))
    ps[:, 0] = rng.uniform(0.4, 0.8, K)
    ps[:, 1] = ps[:, 0] * rng.uniform(0.3, 0.8, K) if monotone else rng.uniform(0.2, 0.8, K)
    py = rng.dirichlet(np.full(L, 3.0), size=(K, 2, 2))
    if satisfy_s0_independence:
        py[:, 1, 0, :] = py[:, 0, 0, :]
    return Discrete(px, pz, ps, py, [0.0, 1.0, 2.5], xvals)


def random_scores(d: Discrete, seed: int):
    rng = np.random.default_rng(seed)
    K, L = len(d.px), len(d.yvals)
    return (rng.uniform(-1, 1, K), rng.uniform(-1, 1, (K, 2)), rng.uniform(-1, 1, (K, 2, 2)),
            rng.uniform(-1, 1, (K, 2, 2, L)))


@pytest.fixture
def discrete():
    return make_discrete()


@pytest.fixture
def discrete_s0():
    return make_discrete(satisfy_s0_independence=True)


def cell_fixture(rows):
    """TrialData from ``(z, s, y)`` triples, no covariates."""
    z, s, y = zip(*rows)
    return TrialData(np.zeros((len(z), 0)), z, s, y)


def finite(v) -> bool:
    return v is not None and math.isfinite(v)


# -- gradient checks shared by unit and acceptance tests ----------------------
ALL_GRADIENTS = ("Phi0", "Phi1_ER", "Phi1_PI", "Phi1_both", "Theta0", "Theta1",
                 ("Phi1_eps", 0.5), ("Phi1_eps", 1.0), ("Phi1_eps", 2.0), "Phi_mu1", "Phi_mu0")
ORACLE_OF = {"Phi0": "psi0", "Phi1_ER": "psi1_er", "Phi1_PI": "psi1_pi", "Phi1_both": "psi1_both",
             "Theta0": "eta0", "Theta1": "eta1", "Phi1_eps": "psi1_eps", "Phi_mu1": "marginal_mu1",
             "Phi_mu0": "marginal_mu0"}


def gid_of(g):
    from vaxstrata.onestep import GradientId

    return GradientId(g[0], g[1]) if isinstance(g, tuple) else GradientId(g)


def gid_label(g) -> str:
    return f"{g[0]}({g[1]:g})" if isinstance(g, tuple) else g


def pathwise_gap(g, score_seed: int, h: float = 1e-5) -> float:
    """|central difference of the oracle functional - E[Phi * score]| on the fixture."""
    from vaxstrata.onestep import gradient_values

    d = make_discrete()
    gid = gid_of(g)
    eps = gid.epsilon
    name = ORACLE_OF[gid.name]
    scores = random_scores(d, score_seed)
    fd = (d.tilt(scores, h).value(name, eps) - d.tilt(scores, -h).value(name, eps)) / (2 * h)
    z, s, y, w = d.observed()
    phi = gradient_values(gid, z, s, y, d.nuisance_values(), d.value(name, eps))
    return abs(fd - float(np.dot(w, phi * d.score_at_atoms(scores))))


def fixture_mean(g) -> float:
    """Exact E[Phi] under the fixture law at the true nuisances."""
    from vaxstrata.onestep import gradient_values

    d = make_discrete()
    gid = gid_of(g)
    z, s, y, w = d.observed()
    phi = gradient_values(gid, z, s, y, d.nuisance_values(), d.value(ORACLE_OF[gid.name], gid.epsilon))
    return float(np.dot(w, phi))


def mc_mean_zero(gids, draws: int = 1_000_000, seed: int = 77, spec=None):
    """(mean, se) of each gradient at the true nuisances on a simulated sample.

    Marginal quantities are the exact population values; the sample
    supplies only the observations.
    """
    from vaxstrata.onestep import gradient_values, plugin_for
    from vaxstrata.simulation import DgpSpec, generate, true_nuisances
    from vaxstrata.simulation.dgp import asymptotics_support

    spec = spec or DgpSpec("asymptotics", n=draws, seed=seed)
    data = generate(spec.with_(n=draws, seed=seed))
    sup = asymptotics_support()
    ref = NuisanceValues(**true_nuisances(spec, sup), weights=np.full(len(sup), 1.0 / len(sup)))
    nv = NuisanceValues(**true_nuisances(spec, data.x), reference=ref)
    out = {}
    for g in gids:
        gid = gid_of(g)
        phi = gradient_values(gid, data.z, data.s, data.y, nv, plugin_for(gid, ref))
        out[gid_label(g)] = (float(phi.mean()), float(phi.std() / math.sqrt(phi.size)))
    return out


def saturation_corrections(gids, n: int = 4000, seed: int = 41):
    """|mean gradient| with saturated nuisances (empirical propensity) per gradient."""
    from vaxstrata.nuisance import fit_nuisance_set
    from vaxstrata.onestep import evaluate_gradient
    from vaxstrata.simulation import DgpSpec, generate

    data = generate(DgpSpec("asymptotics", n=n, seed=seed))
    ns = fit_nuisance_set(data, {"default": {"family": "saturated"}}, delta=0.0)
    return {gid_label(g): abs(evaluate_gradient(gid_of(g), data, ns).mean) for g in gids}
