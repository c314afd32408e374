import itertools
import math

import numpy as np
import pytest

from vaxstrata.diagnostics import ConfigError
from vaxstrata.nuisance import NuisanceValues
from vaxstrata.simulation import (DgpSpec, generate, minimal_combinations, parse_estimator, power_surface,
                                  probabilities, rd_mapping, robustness_study, run_study, truth, truth_exact,
                                  truth_monte_carlo)
from vaxstrata.simulation.robustness import Combination, mix

MAIN = {"default": {"family": "logistic"}}


def expit(v):
    return 1 / (1 + np.exp(-v))


def asymptotics_oracle(eps_i=1.0, eps_p=1.0):
    """Closed-form strata and Y(1) probabilities on the 8-point support."""
    x = np.array(list(itertools.product((0, 1), repeat=3)), dtype=float)
    x1, x2, x3 = x.T
    pd = expit(-1 + 0.5 * x1 - x1 * x2 - 0.5 * x3)
    pi = expit(-1 + 0.5 * x1 - x1 * x3 - 0.5 * x3)
    pp = 1 - pd - pi
    y0d = expit(-1 + 0.5 * x1 - x1 * x2 + 0.5 * x3)
    y1d = expit(np.log(y0d / (1 - y0d)) + 0.1)
    y1i = eps_i * expit(-0.5 + 0.5 * x1 - x1 * x3 + 0.5 * x2)
    y1p = eps_p * y1i
    return x, pd, pp, pi, y0d, y1d, y1p


def test_probabilities_match_closed_form():
    x, pd, pp, pi, *_ = asymptotics_oracle()
    pr = probabilities(DgpSpec("asymptotics"), x)
    assert np.allclose(pr["strata"], np.column_stack([pd, pp, pi]), atol=1e-15, rtol=0)
    assert np.allclose(pr["strata"].sum(axis=1), 1.0, atol=1e-15, rtol=0)


def test_ledger_consistent_and_monotone():
    for spec in (DgpSpec("asymptotics", n=5000, seed=1), DgpSpec("provide_calibrated", n=5000, seed=1)):
        d, led = generate(spec, ledger=True)
        assert led.consistent() and led.monotone()
        assert np.array_equal(d.y, led.y)
        row = led.row(0)
        assert row.s == (row.s1 if row.z else row.s0)


def test_stratum_frequencies_large_sample():
    spec = DgpSpec("asymptotics", n=1_000_000, seed=2)
    _, led = generate(spec, ledger=True)
    _, pd, pp, pi, *_ = asymptotics_oracle()
    n = spec.n
    for code, p in enumerate((pd.mean(), pp.mean(), pi.mean())):
        freq = np.mean(led.stratum == code)
        assert abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_exact_truth_values():
    cases = {(1, 1): (0.4057, 0.3336, 0.0721, 1.2161), (1, 0.5): (0.2574, 0.3336, -0.0763, 0.7714),
             (0.5, 1): (0.2574, 0.3336, -0.0763, 0.7714), (0.5, 0.5): (0.1832, 0.3336, -0.1505, 0.5490)}
    for (ei, ep), want in cases.items():
        tr = truth_exact(DgpSpec("asymptotics", eps_I=ei, eps_P=ep))
        got = (tr.psi1, tr.psi0, tr.additive, tr.multiplicative)
        assert got == pytest.approx(want, abs=5e-5)


@pytest.mark.parametrize("eps", [(1, 1), (1, 0.5), (0.5, 1), (0.5, 0.5)])
def test_exact_truth_against_oracle(eps):
    x, pd, pp, pi, y0d, y1d, y1p = asymptotics_oracle(*eps)
    tr = truth_exact(DgpSpec("asymptotics", eps_I=eps[0], eps_P=eps[1]))
    assert tr.psi1 == pytest.approx(np.sum(pd * y1d + pp * y1p) / np.sum(pd + pp), abs=1e-15)
    assert tr.psi0 == pytest.approx(np.sum((pd + pp) * y0d) / np.sum(pd + pp), abs=1e-15)
    assert tr.p_doomed + tr.p_protected + tr.p_immune == pytest.approx(1.0, abs=1e-15)


def test_single_violation_rows_agree():
    # the Protected Y(1) probability is eps_I * eps_P times the Immune control one
    r2 = truth_exact(DgpSpec("asymptotics", eps_P=0.5))
    r3 = truth_exact(DgpSpec("asymptotics", eps_I=0.5))
    assert r2.psi1 == r3.psi1 and r2.psi0 == r3.psi0 and r2.additive == r3.additive


@pytest.mark.parametrize("eps", [(1, 1), (1, 0.5), (0.5, 1)])
def test_multiplicative_additive_identity(eps):
    tr = truth_exact(DgpSpec("asymptotics", eps_I=eps[0], eps_P=eps[1]))
    assert tr.multiplicative == pytest.approx(1 + tr.additive / tr.psi0, abs=1e-14)
    assert tr.ve == pytest.approx(1 - tr.p_doomed / (tr.p_doomed + tr.p_protected), abs=1e-14)


def test_monte_carlo_truth_close_to_exact():
    spec = DgpSpec("asymptotics")
    mc, ex = truth_monte_carlo(spec, draws=1_000_000, seed=3), truth_exact(spec)
    assert mc.provenance == "monte_carlo" and mc.draws == 1_000_000
    for f in ("psi1", "psi0", "p_doomed", "p_immune", "marginal_rd"):
        assert abs(getattr(mc, f) - getattr(ex, f)) <= 4 * mc.se[f], f


def test_exact_mode_unsupported_for_continuous_covariates():
    with pytest.raises(ConfigError):
        truth(DgpSpec("provide_calibrated"), "exact")
    with pytest.raises(ConfigError):
        truth(DgpSpec("asymptotics"), "bogus")


def test_null_effects_exactly_zero_at_eta_zero():
    tr = truth_monte_carlo(DgpSpec("provide_calibrated", delta_I=0.16, delta_P=-0.19), draws=200_000, seed=1)
    assert tr.marginal_rd == 0.0 and tr.doomed_rd == 0.0 and tr.protected_rd == 0.0


def test_rd_mapping_monotone():
    m = rd_mapping(DgpSpec("provide_calibrated", delta_I=-0.73, delta_P=-0.12), draws=100_000, seed=2)
    assert m["RD_D"][0] == 0.0 and m["RD_P"][0] == 0.0
    assert np.all(np.diff(m["RD_D"]) < 0) and np.all(np.diff(m["RD_P"]) < 0)


def test_determinism_of_generate():
    a = generate(DgpSpec("provide_calibrated", n=300, seed=4))
    b = generate(DgpSpec("provide_calibrated", n=300, seed=4))
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.y, generate(DgpSpec("provide_calibrated", n=300, seed=5)).y)


def test_spec_validation():
    with pytest.raises(ConfigError):
        DgpSpec("nope")
    with pytest.raises(ConfigError):
        DgpSpec(n=0)
    with pytest.raises(ConfigError):
        DgpSpec.from_dict({"study": "asymptotics", "bogus": 1})
    s = DgpSpec("provide_calibrated", delta_I=0.2)
    assert DgpSpec.from_dict(s.to_dict()) == s


def test_single_replicate_has_zero_variance():
    res = run_study(DgpSpec("asymptotics", n=100), ["psi1_pi-psi0"], 1, nuisance_config=MAIN, seed=0)
    m = res[0].metric("psi1_pi-psi0")
    assert m.replicates == 1 and m.failed == 0
    assert m.variance_scaled == 0.0
    assert m.mse_scaled >= m.variance_scaled


def test_failed_replicates_are_counted():
    # seed 1 at n = 100 leaves x3 constant among vaccinated infected
    with pytest.warns(UserWarning, match="replicates failed"):
        res = run_study(DgpSpec("asymptotics", n=100), ["psi1_pi-psi0"], 1, nuisance_config=MAIN, seed=1)
    m = res[0].metric("psi1_pi-psi0")
    assert m.failed == 1 and m.replicates == 0
    assert res[0].failures["psi1_pi-psi0"]["rate"] == 1.0


def test_study_is_deterministic_across_workers():
    args = (DgpSpec("asymptotics", n=500), ["psi1_pi-psi0", "psi0", "bounds"], 4)
    kw = dict(nuisance_config=MAIN, seed=8, bootstrap_B=20)
    a = run_study(*args, **kw, workers=1).to_json()
    b = run_study(*args, **kw, workers=1).to_json()
    c = run_study(*args, **kw, workers=2).to_json()
    assert a == b == c


def test_study_metrics_are_coherent():
    res = run_study([DgpSpec("asymptotics", n=800), DgpSpec("asymptotics", n=800, eps_P=0.5)],
                    ["psi1_pi-psi0", "psi1_er/psi0", "bounds"], 6, nuisance_config=MAIN, seed=2, bootstrap_B=30)
    for s in res.settings:
        pm = s.metric("psi1_pi-psi0")
        assert 0.0 <= pm.coverage <= 1.0
        assert pm.mse_scaled >= pm.variance_scaled - 1e-12
        assert pm.truth == pytest.approx(s.truth.additive, abs=1e-15)
        assert s.metric("psi1_er/psi0").scale == "multiplicative"
        bm = s.metric("bounds")
        assert 0.0 <= bm.coverage_lower <= 1.0 and 0.0 <= bm.effect_coverage <= 1.0
    assert "estimator" in res.to_csv().splitlines()[0]


def test_parse_estimator():
    e = parse_estimator("plugin:psi1_er-psi0")
    assert (e.method, e.first, e.op, e.second, e.scale) == ("plugin", "psi1_er", "-", "psi0", "additive")
    b = parse_estimator("bounds[x1, x3]")
    assert b.kind == "bounds" and b.covariates == ("x1", "x3")
    for bad in ("psi7", "psi0*psi1_pi", "bayes:psi0"):
        with pytest.raises(ConfigError):
            parse_estimator(bad)
    with pytest.raises(ConfigError):
        run_study(DgpSpec(), ["psi0"], 0)


def test_power_null_cell_near_nominal():
    ps = power_surface((0.16, -0.19), [0.0], [0.0], ["marginal_mu1-marginal_mu0", "psi1_pi-psi0"],
                       replicates=300, seed=3, rd_draws=None)
    for est in ("marginal_mu1-marginal_mu0", "psi1_pi-psi0"):
        r = ps.rate(est, 0.0, 0.0)
        assert abs(r - 0.05) <= 3 * math.sqrt(0.05 * 0.95 / 300), est
    assert ps.to_csv().splitlines()[0].startswith("delta_I,delta_P,eta_D,eta_P")


def test_power_grid_validation():
    with pytest.raises(ConfigError):
        power_surface((0.0, 0.0), [], [0.0])


def test_mix_selects_fields():
    good = NuisanceValues(rho0=np.ones(2), mu01=np.ones(2))
    bad = NuisanceValues(rho0=np.zeros(2), mu01=np.zeros(2))
    m = mix(good, bad, ["rho0"])
    assert np.all(m.rho0 == 1) and np.all(m.mu01 == 0)


def test_robustness_all_consistent_unbiased():
    combos = [Combination("psi0", ("rho0", "mu01")), Combination("psi1_pi", ("rho1", "rho0", "mu11", "mu10"))]
    res = robustness_study(DgpSpec("asymptotics", n=2000), combos, 60, seed=4)
    for r in res:
        assert r.replicates == 60
        assert abs(r.bias) <= 4 * r.mc_se, r.combination
    names = [c.name() for c in minimal_combinations()]
    assert "psi0[all]" in names and len(set(names)) == len(names)
    with pytest.raises(ConfigError):
        robustness_study(DgpSpec("provide_calibrated"), combos, 1)
