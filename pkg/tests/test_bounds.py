import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_discrete
from vaxstrata import TrialData
from vaxstrata.bounds import (BootstrapSpec, bootstrap_draws, bounds_adjusted, bounds_bootstrap,
                              bounds_unadjusted, percentile_ci)
from vaxstrata.diagnostics import ConfigError, EstimationError, VaxWarning
from vaxstrata.simulation import DgpSpec, generate, population_bounds, truth_exact


def codes(caught):
    return {getattr(w.message, "code", None) for w in caught}


def trim_oracle(z, s, y):
    """Trimming bounds computed directly from sorted (Z=1, S=0) outcomes."""
    z, s, y = map(np.asarray, (z, s, y))
    r0, r1 = s[z == 0].mean(), s[z == 1].mean()
    mu11 = y[(z == 1) & (s == 1)].mean()
    y10 = np.sort(y[(z == 1) & (s == 0)])
    m = y10.size
    q = min(max((r0 - r1) / (1 - r1), 0.0), 1.0)
    if q == 0:
        lo = hi = y10.mean()
    elif np.unique(y10).size < m:
        k = min(max(math.ceil(q * m - 1e-9), 1), m)
        lo, hi = y10[:k].mean(), y10[-k:].mean()
    else:
        ql = y10[math.ceil(q * m - 1e-9) - 1]  # inverse-CDF quantiles
        qh = y10[math.ceil((1 - q) * m - 1e-9) - 1]
        lo, hi = y10[y10 < ql].mean(), y10[y10 > qh].mean()
    wd = min(r1 / r0, 1.0)
    return wd * mu11 + (1 - wd) * lo, wd * mu11 + (1 - wd) * hi


def adjusted_oracle(data, cols):
    keys = data.x[:, cols]
    lo = hi = 0.0
    for key in np.unique(keys, axis=0):
        m = np.all(keys == key, axis=1)
        l, u = trim_oracle(data.z[m], data.s[m], data.y[m])
        lo += m.mean() * l
        hi += m.mean() * u
    return lo, hi


def population_oracle(d):
    """Cell-wise limit of the adjusted bounds under a Discrete law."""
    lo = hi = 0.0
    for k in range(len(d.px)):
        r0, r1 = d.ps[k]
        q = (r0 - r1) / (1 - r1)
        p = d.py[k, 1, 0]

        def trimmed(order):
            left, acc = q, 0.0
            for l in order:
                take = min(p[l], left)
                acc += take * d.yvals[l]
                left -= take
            return acc / q

        L = len(d.yvals)
        wd = r1 / r0
        lo += d.px[k] * (wd * d.mu(1, 1)[k] + (1 - wd) * trimmed(range(L)))
        hi += d.px[k] * (wd * d.mu(1, 1)[k] + (1 - wd) * trimmed(range(L - 1, -1, -1)))
    return lo, hi


@pytest.fixture(scope="module")
def sim():
    return generate(DgpSpec("asymptotics", n=4000, seed=61))


def continuous(seed, n=800):
    rng = np.random.default_rng(seed)
    z = rng.integers(0, 2, n)
    s = (rng.random(n) < np.where(z == 1, 0.3, 0.55)).astype(int)
    y = rng.normal(size=n) + s
    return TrialData(rng.integers(0, 2, (n, 1)), z, s, y)


def test_no_protected_mass_collapses():
    z = np.repeat([0, 1], 200)
    s = np.tile(np.r_[np.ones(80), np.zeros(120)], 2)
    y = np.random.default_rng(0).random(400)
    rep = bounds_unadjusted(TrialData(np.zeros((400, 0)), z, s, y))
    assert rep.q == 0.0
    mu11 = y[(z == 1) & (s == 1)].mean()
    assert rep.lower == rep.upper
    assert rep.lower == pytest.approx(mu11 * 0.4 / 0.4, abs=1e-15)


def test_infection_necessary_collapses():
    rng = np.random.default_rng(4)
    n = 1000
    z = rng.integers(0, 2, n)
    s = (rng.random(n) < np.where(z == 1, 0.2, 0.5)).astype(int)
    y = s * rng.integers(0, 2, n)
    rep = bounds_unadjusted(TrialData(np.zeros((n, 0)), z, s, y))
    r0, r1 = s[z == 0].mean(), s[z == 1].mean()
    expect = y[(z == 1) & (s == 1)].mean() * r1 / r0
    assert rep.q > 0
    assert rep.lower == pytest.approx(expect, abs=1e-15)
    assert rep.upper == pytest.approx(expect, abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_unadjusted_continuous_matches_oracle(seed):
    d = continuous(seed)
    rep = bounds_unadjusted(d)
    assert not rep.tie_aware
    lo, hi = trim_oracle(d.z, d.s, d.y)
    assert rep.lower == pytest.approx(lo, abs=1e-12)
    assert rep.upper == pytest.approx(hi, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_unadjusted_ties_match_oracle(seed):
    d = make_discrete(seed=seed + 20).sample(1500, np.random.default_rng(seed))
    rep = bounds_unadjusted(d)
    assert rep.tie_aware
    lo, hi = trim_oracle(d.z, d.s, d.y)
    assert rep.lower == pytest.approx(lo, abs=1e-12)
    assert rep.upper == pytest.approx(hi, abs=1e-12)


def test_single_constant_covariate_equals_unadjusted(sim):
    d = TrialData(np.ones((sim.n, 1)), sim.z, sim.s, sim.y, ["c"])
    a, b = bounds_unadjusted(d), bounds_adjusted(d, covariates=["c"])
    assert (a.lower, a.upper, a.q) == pytest.approx((b.lower, b.upper, b.q), abs=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_adjusted_matches_cellwise_oracle(seed):
    d = make_discrete(seed=seed).sample(3000, np.random.default_rng(100 + seed))
    rep = bounds_adjusted(d, covariates=[0, 1])
    lo, hi = adjusted_oracle(d, [0, 1])
    assert rep.lower == pytest.approx(lo, abs=1e-12)
    assert rep.upper == pytest.approx(hi, abs=1e-12)
    assert rep.covariates == ("x1", "x2")
    assert sum(dict(c)["weight"] for c in rep.cells) == pytest.approx(1.0, abs=1e-12)


def test_adjusted_converges_to_population_oracle():
    d = make_discrete(seed=3)
    rep = bounds_adjusted(d.sample(400_000, np.random.default_rng(8)), covariates=[0, 1])
    lo, hi = population_oracle(d)
    assert rep.lower == pytest.approx(lo, abs=0.01)
    assert rep.upper == pytest.approx(hi, abs=0.01)


def test_population_bound_values():
    pb = population_bounds(DgpSpec("asymptotics"))
    assert (pb.lower, pb.upper) == pytest.approx((0.27757, 0.56065), abs=5e-6)
    assert pb.upper - pb.lower == pytest.approx(0.2831, abs=1e-4)


@pytest.mark.parametrize("eps", [(1, 1), (0.5, 1), (1, 0.5)])
@pytest.mark.parametrize("cov", [(), ("x1",), ("x3",), ("x1", "x2", "x3")])
def test_population_bounds_contain_truth(eps, cov):
    spec = DgpSpec("asymptotics", eps_I=eps[0], eps_P=eps[1])
    pb = population_bounds(spec, cov)
    assert pb.lower <= truth_exact(spec).psi1 <= pb.upper


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.booleans())
def test_trimmed_mean_sandwich(seed, ties):
    d = make_discrete(seed=seed % 50).sample(400, np.random.default_rng(seed)) if ties else continuous(seed, 300)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = bounds_unadjusted(d)
    assert rep.trimmed_low <= rep.mu10 + 1e-12
    assert rep.mu10 <= rep.trimmed_high + 1e-12
    assert rep.lower <= rep.upper
    assert 0.0 <= rep.q <= 1.0


def test_negative_q_clamped_with_warning():
    rng = np.random.default_rng(1)
    n = 600
    z = rng.integers(0, 2, n)
    s = (rng.random(n) < np.where(z == 1, 0.6, 0.3)).astype(int)
    d = TrialData(np.zeros((n, 0)), z, s, rng.random(n))
    with pytest.warns(VaxWarning) as rec:
        rep = bounds_unadjusted(d)
    assert "bounds.q_clamped" in codes(rec)
    assert rep.q == 0.0 and rep.q_clamped and rep.lower == rep.upper


def test_strict_fallback_warns():
    # five vaccinated uninfected, q about 0.1: no value lies strictly below the quantile
    z = np.r_[np.zeros(10), np.ones(10)]
    s = np.r_[np.ones(6), np.zeros(4), np.ones(5), np.zeros(5)]
    y = np.r_[np.zeros(10), np.zeros(5), [0.1, 0.2, 0.3, 0.4, 0.5]]
    with pytest.warns(VaxWarning) as rec:
        rep = bounds_unadjusted(TrialData(np.zeros((20, 0)), z, s, y))
    assert "bounds.strict_trim_fallback" in codes(rec)
    assert rep.trimmed_low == 0.1 and rep.trimmed_high == 0.5


def test_no_infected_placebo():
    # q > 0 forces rho1 < 1, so the (1,0) cell is never empty; the reachable
    # failure is a placebo arm without infections
    z = np.r_[np.zeros(4), np.ones(4)]
    s = np.r_[0, 0, 0, 0, 1, 1, 0, 0]
    with pytest.raises(EstimationError, match="infected placebo"):
        bounds_unadjusted(TrialData(np.zeros((8, 0)), z, s, np.ones(8), check_positivity=False))


def test_adjusted_cell_error_names_cell(sim):
    x = np.zeros((sim.n, 1))
    x[:40, 0] = 1.0
    z, s = sim.z.copy(), sim.s.copy()
    z[:40] = np.r_[np.zeros(20), np.ones(20)]
    s[:40] = np.r_[np.zeros(20), np.ones(10), np.zeros(10)]
    d = TrialData(x, z, s, sim.y, ["g"])
    with pytest.raises(EstimationError, match="'g': 1.0"):
        bounds_adjusted(d, covariates=["g"])


def test_many_level_covariate_needs_bins():
    d = continuous(0)
    d = TrialData(np.random.default_rng(0).normal(size=(d.n, 1)), d.z, d.s, d.y, ["w"])
    with pytest.raises(ConfigError):
        bounds_adjusted(d, covariates=["w"])
    rep = bounds_adjusted(d, covariates=["w"], bins={"w": 3})
    assert len(rep.cells) == 3


def test_effect_scales(sim):
    rep = bounds_unadjusted(sim)
    assert rep.effect_additive == (rep.lower - rep.psi0, rep.upper - rep.psi0)
    assert rep.effect_multiplicative == (rep.lower / rep.psi0, rep.upper / rep.psi0)
    assert rep.to_dict()["lower"] == rep.lower


def test_bootstrap_is_reproducible(sim):
    spec = BootstrapSpec(B=2, seed=99)
    a, b = bounds_bootstrap(sim, spec), bounds_bootstrap(sim, spec)
    assert (a.ci_lower, a.ci_upper) == (b.ci_lower, b.ci_upper)
    assert a.replicates == 2


def test_bootstrap_workers_invariant(sim):
    a = bootstrap_draws(sim, BootstrapSpec(B=40, seed=3, workers=1))
    b = bootstrap_draws(sim, BootstrapSpec(B=40, seed=3, workers=2))
    assert np.array_equal(a, b)
    a = bootstrap_draws(sim, BootstrapSpec(B=20, seed=3, covariates=("x3",), workers=1))
    b = bootstrap_draws(sim, BootstrapSpec(B=20, seed=3, covariates=("x3",), workers=2))
    assert np.array_equal(a, b)


def test_bootstrap_interval_contains_point(sim):
    rep = bounds_bootstrap(sim, BootstrapSpec(B=200, seed=12))
    assert rep.ci_lower[0] <= rep.lower <= rep.ci_lower[1]
    assert rep.ci_upper[0] <= rep.upper <= rep.ci_upper[1]


def test_bootstrap_failed_replicates_reported():
    z = np.r_[np.zeros(6), np.ones(6)]
    s = np.r_[1, 1, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0]
    d = TrialData(np.zeros((12, 0)), z, s, np.arange(12.0))
    with pytest.warns(VaxWarning) as rec:
        rep = bounds_bootstrap(d, BootstrapSpec(B=50, seed=1, retry_cap=0))
    assert "bounds.bootstrap_failed_replicates" in codes(rec)
    assert rep.failed_replicates > 0
    assert rep.replicates + rep.failed_replicates == 50


def test_bootstrap_unseeded_warns(sim):
    with pytest.warns(VaxWarning) as rec:
        bounds_bootstrap(sim, BootstrapSpec(B=2))
    assert "rng.time_seeded" in codes(rec)
    with pytest.raises(ConfigError):
        BootstrapSpec(B=0)


def test_percentile_ci():
    assert percentile_ci(np.arange(101.0), 0.1) == (5.0, 95.0)
    lo, hi = percentile_ci(np.array([np.nan, np.nan]), 0.05)
    assert math.isnan(lo) and math.isnan(hi)


@pytest.mark.slow
def test_bootstrap_coverage_of_known_bound():
    spec = DgpSpec("asymptotics", n=1000)
    pb = population_bounds(spec)
    hit_l = hit_u = 0
    reps = 1000
    for r in range(reps):
        d = generate(spec.with_(seed=10_000 + r))
        rep = bounds_bootstrap(d, BootstrapSpec(B=500, seed=r))
        hit_l += rep.ci_lower[0] <= pb.lower <= rep.ci_lower[1]
        hit_u += rep.ci_upper[0] <= pb.upper <= rep.ci_upper[1]
    assert hit_l / reps >= 0.93
    assert hit_u / reps >= 0.93
