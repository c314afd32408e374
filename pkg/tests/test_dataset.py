import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vaxstrata import TrialData
from vaxstrata.dataset import Observation, cell_stats, load_csv
from vaxstrata.diagnostics import DataError, PositivityError
from vaxstrata.simulation import DgpSpec, generate, probabilities
from vaxstrata.simulation.dgp import asymptotics_support

SCHEMA = {"z": "z", "s": "s", "y": "y", "x": ["a"]}


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_four_row_file(tmp_path):
    p = write(tmp_path, "z,s,y,a\n0,0,0,1\n0,1,1,0\n1,0,0,1\n1,1,1,0\n")
    d = load_csv(p, SCHEMA)
    assert d.n == 4 and d.p == 1
    assert d.covariate_names == ("a",)
    assert list(d.z) == [0, 0, 1, 1]


def test_crlf_and_column_order(tmp_path):
    p = write(tmp_path, "y,a,s,z\r\n0,1,0,0\r\n1,0,1,0\r\n0,1,0,1\r\n1,0,1,1\r\n")
    d = load_csv(p, SCHEMA)
    assert list(d.y) == [0, 1, 0, 1]
    assert list(d.s) == [0, 1, 0, 1]


def test_all_uninfected_positivity(tmp_path):
    p = write(tmp_path, "z,s,y,a\n0,0,0,1\n1,0,1,0\n")
    with pytest.raises(PositivityError):
        load_csv(p, SCHEMA)


@pytest.mark.parametrize("body,row,col", [
    ("0,1,x,1\n", 2, "y"),
    ("0,2,1,1\n", 2, "s"),
    ("0,1,1,1\n0.5,1,1,1\n", 3, "z"),
    ("0,1,,1\n", 2, "y"),
    ("0,1,1,NA\n", 2, "a"),
])
def test_cell_errors_are_located(tmp_path, body, row, col):
    p = write(tmp_path, "z,s,y,a\n" + body)
    with pytest.raises(DataError) as ei:
        load_csv(p, SCHEMA)
    assert ei.value.row == row and ei.value.column == col


def test_missing_column_and_empty(tmp_path):
    with pytest.raises(DataError) as ei:
        load_csv(write(tmp_path, "z,s,y\n0,1,1\n"), SCHEMA)
    assert ei.value.column == "a"
    with pytest.raises(DataError):
        load_csv(write(tmp_path, "", "e.csv"), SCHEMA)
    with pytest.raises(DataError):
        load_csv(write(tmp_path, "z,s,y,a\n", "h.csv"), SCHEMA)
    with pytest.raises(DataError):
        load_csv(write(tmp_path, "z,s,y,a\n0,1,1\n", "short.csv"), SCHEMA)


def test_observation_validation():
    with pytest.raises(DataError):
        Observation((0.0,), 2, 0, 1.0)
    with pytest.raises(DataError):
        Observation((math.nan,), 0, 0, 1.0)


def test_arrays_are_read_only():
    d = TrialData(np.zeros((2, 1)), [0, 1], [1, 1], [0.0, 1.0])
    with pytest.raises(ValueError):
        d.y[0] = 3.0


def test_simulated_dataset_shape():
    d = generate(DgpSpec("asymptotics", n=500, seed=1))
    assert d.n == 500 and d.p == 3
    assert set(np.unique(d.x)) <= {0.0, 1.0}


def test_constant_outcome():
    d = generate(DgpSpec("asymptotics", n=300, seed=2))
    c = cell_stats(TrialData(d.x, d.z, d.s, np.ones(d.n)))
    assert all(c.mean[z][s] == 1.0 for z in (0, 1) for s in (0, 1))


def _small(seed=0, n=200):
    return generate(DgpSpec("asymptotics", n=n, seed=seed))


def test_duplication_invariance():
    d = _small()
    idx = np.concatenate([np.arange(d.n), np.arange(d.n)])
    a, b = cell_stats(d), cell_stats(d.take(idx))
    assert a.mean == b.mean and a.rho_bar == b.rho_bar and a.arm_mean == b.arm_mean


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_permutation_invariance(seed):
    d = _small()
    perm = np.random.default_rng(seed).permutation(d.n)
    assert cell_stats(d) == cell_stats(d.take(perm))


def test_reconstruction_identity():
    c = cell_stats(_small(3, 1000))
    for z in (0, 1):
        mix = c.mean[z][1] * c.rho_bar[z] + c.mean[z][0] * (1 - c.rho_bar[z])
        assert abs(mix - c.arm_mean[z]) <= 1e-12


def test_cell_invariants_and_empty_flag():
    d = TrialData(np.zeros((3, 0)), [0, 1, 1], [1, 1, 0], [2.0, 3.0, 5.0])
    c = cell_stats(d)
    assert sum(sum(r) for r in c.count) == 3
    assert c.empty_cells == ((0, 0),) and c.mean[0][0] is None
    with pytest.raises(DataError):
        c.mu(0, 0)
    for z in (0, 1):
        for s in (0, 1):
            if c.mean[z][s] is not None:
                lo, hi = c.y_range[z][s]
                assert lo <= c.mean[z][s] <= hi


def test_large_sample_infection_rate():
    spec = DgpSpec("asymptotics", n=1_000_000, seed=4)
    d = generate(spec)
    c = cell_stats(d)
    x = asymptotics_support()
    pr = probabilities(spec, x)
    rho0 = pr["strata"][:, 0] + pr["strata"][:, 1]
    w0 = (1 - pr["pi1"]) / 8
    exact = float(np.dot(w0, rho0) / w0.sum())
    m0 = c.arm_size[0]
    se = math.sqrt(exact * (1 - exact) / m0)
    assert abs(c.rho_bar[0] - exact) <= 3 * se
