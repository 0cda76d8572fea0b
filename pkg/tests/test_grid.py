import copy
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import cell, closed_form, sequential_grid_log_m
from seqrank.errors import InvalidCounts, InvalidDepth, InvalidRank
from seqrank.grid import BinIndex, GridState, bin_index, closed_form_log_m


@pytest.mark.parametrize("r,s,d,expected", [
    (0.3, 0.8, 2, (0, 1)),
    (0.5, 0.5, 2, (0, 0)),
    (1.0, 1.0, 4, (3, 3)),
    (0.0, 0.0, 4, (0, 0)),
    (0.25, 0.2500001, 4, (0, 1)),
])
def test_bin_index(r, s, d, expected):
    assert bin_index(r, s, d) == BinIndex(*expected)


@settings(max_examples=300, deadline=None)
@given(st.fractions(0, 1), st.fractions(0, 1), st.integers(1, 32))
def test_bin_index_matches_rational_oracle(r, s, d):
    # floats that are exact dyadic rationals hit the edges exactly
    rf, sf = float(r), float(s)
    assert bin_index(rf, sf, d) == (cell(rf, d), cell(sf, d))


def test_bin_index_errors():
    with pytest.raises(InvalidRank):
        bin_index(1.2, 0.5, 2)
    with pytest.raises(InvalidDepth):
        bin_index(0.2, 0.5, 0)


def test_density_examples():
    g = GridState(4)
    assert all(g.density_at((k, l)) == 1.0 for k in range(4) for l in range(4))
    g = GridState(2)
    g.counts[:] = [[2, 1], [0, 0]]
    g.n_seen = 3
    assert g.density_at((0, 0)) == pytest.approx(12 / 7)
    g = GridState(2, c0=0.5)
    g.counts[:] = [[2, 1], [0, 0]]
    g.n_seen = 3
    assert g.density_at((0, 0)) == pytest.approx(2.0)


def test_first_observation_is_free():
    g = GridState(4)
    assert g.update(0.1, 0.9) == 0.0
    assert g.log_m == 0.0


def test_two_observations_closed_form():
    same = GridState(2, n_act=0)
    same.update(0.1, 0.1)
    same.update(0.2, 0.3)
    assert same.log_m == pytest.approx(math.log(1.6), abs=1e-14)
    diff = GridState(2, n_act=0)
    diff.update(0.1, 0.1)
    diff.update(0.2, 0.9)
    assert diff.log_m == pytest.approx(math.log(0.8), abs=1e-14)


def test_closed_form_examples():
    assert closed_form_log_m(np.zeros((2, 2)), 0, 2) == 0.0
    assert closed_form_log_m([[2, 0], [0, 0]], 2, 2) == pytest.approx(math.log(1.6))
    assert closed_form_log_m([[1, 1], [0, 0]], 2, 2) == pytest.approx(math.log(0.8))
    with pytest.raises(InvalidCounts):
        closed_form_log_m([[1, 1], [0, 0]], 3, 2)


@pytest.mark.parametrize("d", [2, 3, 4, 8])
def test_incremental_matches_oracles(d):
    rng = np.random.default_rng(d)
    r, s = rng.random((2, 300))
    g = GridState(d, n_act=0)
    for a, b in zip(r, s):
        g.update(a, b)
    ref, counts = sequential_grid_log_m(r, s, d)
    assert g.log_m == pytest.approx(ref, abs=1e-10)
    assert np.array_equal(g.counts, counts)
    assert g.log_m == pytest.approx(closed_form(counts, d), abs=1e-9)
    assert g.log_m == pytest.approx(closed_form_log_m(counts, 300, d), abs=1e-9)


def test_half_prior_uses_gamma_functions():
    rng = np.random.default_rng(9)
    r, s = rng.random((2, 200))
    g = GridState(4, c0=0.5, n_act=0)
    for a, b in zip(r, s):
        g.update(a, b)
    assert g.log_m == pytest.approx(closed_form(g.counts, 4, c0=0.5), abs=1e-9)


def test_normalization_and_conservation():
    rng = np.random.default_rng(3)
    for sink in (False, True):
        g = GridState(8, sinkhorn=sink)
        for a, b in rng.random((100, 2)) ** 2:
            g.update(a, b)
            dens = g.cell_densities()
            assert dens.sum() / 64 == pytest.approx(1.0, abs=1e-12)
            if g.active:
                assert g.counts.sum() == g.n_seen
        assert np.all(g.counts == np.round(g.counts))


def test_warm_up_backfills_at_batch_ranks():
    g = GridState(2)
    g.update(0.9, 0.1)
    g.update(0.4, 0.6)
    # batch ranks of (0.9, 0.4) are (1, 1/2); of (0.1, 0.6) are (1/2, 1)
    assert np.array_equal(g.counts, [[0, 1], [1, 0]])
    assert g.n_seen == 2 and g.log_m == 0.0
    inc = g.update(0.2, 0.2)
    assert inc == pytest.approx(math.log(4 * 1 / 6))


def test_expected_update_conserves_mass():
    g = GridState(4, n_act=0, sinkhorn=True)
    rng = np.random.default_rng(0)
    for n in range(1, 60):
        c = int(rng.integers(1, n + 1))
        e = int(rng.integers(1, n + 1))
        g.update_rect(c, e, n)
        assert g.counts.sum() == pytest.approx(g.n_seen, abs=1e-9)


def test_conditional_mean_of_increment_is_one():
    # under the null the next tie-free rank pair is uniform on {1..n}^2
    rng = np.random.default_rng(12)
    for sink in (False, True):
        g = GridState(4, sinkhorn=sink)
        x, y = rng.random((2, 40))
        for n in range(1, 41):
            cx = int(np.sum(x[:n] <= x[n - 1]))
            cy = int(np.sum(y[:n] <= y[n - 1]))
            if n <= g.n_act:
                g.hold()
                if n == g.n_act:
                    g.backfill(x[:n], y[:n])
                continue
            total = 0.0
            for a in range(1, n + 1):
                for b in range(1, n + 1):
                    trial = copy.deepcopy(g)
                    total += math.exp(trial.update_rect(a, b, n))
            assert total / n ** 2 == pytest.approx(1.0, abs=1e-12)
            g.update_rect(cx, cy, n)


@pytest.mark.xfail(strict=True, reason="sample mean of a heavy-tailed e-value; see ledger")
def test_null_mean_of_martingale():
    rng = np.random.default_rng(12)
    vals = []
    for _ in range(5000):
        g = GridState(4)
        r, s = rng.random((2, 200))
        for a, b in zip(r, s):
            g.update(a, b)
        vals.append(math.exp(g.log_m))
    assert 0.85 <= np.mean(vals) <= 1.15
