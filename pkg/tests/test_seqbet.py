import math

import numpy as np
import pytest

from seqrank.errors import InvalidDepth, InvalidRank
from seqrank.grid import GridState
from seqrank.seqbet import BetState, interaction_masks, interaction_regions


def test_depth_one_is_the_diagonal_split():
    (reg,) = interaction_regions(1)
    assert np.array_equal(reg.mask(), [[1, 0], [0, 1]])
    # ceil(2r) + ceil(2s) even
    for r, s in [(0.2, 0.3), (0.7, 0.9), (0.2, 0.8), (0.5, 0.51)]:
        even = (math.ceil(2 * r) + math.ceil(2 * s)) % 2 == 0
        assert reg.sign(r, s) == (1 if even else -1)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_region_count_and_balance(k):
    regs = interaction_regions(k)
    d = 2 ** k
    assert len(regs) == (d - 1) ** 2
    masks = interaction_masks(k)
    assert np.all(masks.sum(axis=(1, 2)) == d * d / 2)
    # distinct splits
    assert len({m.tobytes() for m in masks}) == len(regs)


def test_depth_two_regions_are_products_of_digit_signs():
    masks = interaction_masks(2)
    sgn = 2 * masks - 1
    rad = {1: np.array([1, 1, -1, -1]), 2: np.array([1, -1, 1, -1])}
    seen = set()
    for a in ({1}, {2}, {1, 2}):
        for b in ({1}, {2}, {1, 2}):
            fx = np.prod([rad[i] for i in a], axis=0)
            fy = np.prod([rad[j] for j in b], axis=0)
            target = np.outer(fx, fy)
            hits = [i for i in range(9) if np.array_equal(sgn[i], target)]
            assert len(hits) == 1
            seen.add(hits[0])
    assert seen == set(range(9))


@pytest.mark.parametrize("k", [0, -1, 1.5])
def test_bad_depth(k):
    with pytest.raises(InvalidDepth):
        interaction_regions(k)


def test_first_observation_is_free():
    b = BetState(2, n_act=0)
    assert b.update(0.3, 0.9) == 0.0


def test_three_agreeing_observations_give_two():
    b = BetState(1, n_act=0)
    for r, s in [(0.1, 0.2), (0.9, 0.8), (0.3, 0.4)]:
        b.update(r, s)
    assert math.exp(b.log_m) == pytest.approx(2.0, rel=1e-14)


@pytest.mark.parametrize("k", [1, 2])
def test_each_interaction_is_a_two_bin_histogram_martingale(k):
    rng = np.random.default_rng(k)
    d = 2 ** k
    bet = BetState(k, n_act=0)
    regs = interaction_regions(k)
    h = np.zeros(len(regs))
    ref = np.zeros(len(regs))
    for n, (r, s) in enumerate(rng.random((300, 2))):
        bet.update(r, s)
        for i, reg in enumerate(regs):
            side = reg.sign(r, s) == 1
            count = h[i] if side else n - h[i]
            ref[i] += math.log(2 * (count + 1) / (n + 2))
            h[i] += side
    assert np.array_equal(bet.h1, h)
    assert np.allclose(bet.log_m_each, ref, atol=1e-10)
    n = 300
    closed = n * math.log(2) + np.array([math.lgamma(c + 1) + math.lgamma(n - c + 1) for c in h]) - math.lgamma(n + 2)
    assert np.allclose(bet.log_m_each, closed, atol=1e-9)


def test_rank_range_checked():
    with pytest.raises(InvalidRank):
        BetState(2).update(1.5, 0.2)


def test_null_crossing_rate():
    rng = np.random.default_rng(31)
    crossed = 0
    reps = 200
    for _ in range(reps):
        b = BetState(2)
        for r, s in rng.random((2000, 2)):
            b.update(r, s)
            if b.log_m >= math.log(20):
                crossed += 1
                break
    assert crossed / reps <= 0.05 + 3 * math.sqrt(0.05 * 0.95 / reps)


def test_interaction_growth_below_full_grid():
    # comonotone copula: the d = 2 grid captures at least as much as its split
    rng = np.random.default_rng(8)
    u = rng.random(100_000)
    grid = GridState(2, n_act=0)
    bet = BetState(1, n_act=0)
    for a in u:
        grid.update(a, a)
        bet.update(a, a)
    assert bet.log_m_each.max() / u.size <= grid.log_m / u.size + 1e-3
