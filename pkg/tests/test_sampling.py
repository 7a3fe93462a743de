import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_space, two_points
from mmconv.core import FiniteMMSpace, check_equivalence, restrict
from mmconv.errors import DimensionMismatch, EmptySupport, SizeLimitExceeded
from mmconv.sampling import (
    EmpiricalDMD,
    dmd_discrepancy,
    dmd_exact,
    dmd_sample,
    pair_order,
    polynomial_eval,
    restrict_dmd,
)

seeds = st.integers(0, 2**32 - 1)


def brute_polynomial(space, m, lam):
    """Sum over all m-tuples of points, independent of atom merging."""
    total = 0.0
    pts = range(space.point_count)
    for tup in np.ndindex(*([space.point_count] * m)):
        full = (space.root,) + tup
        w = np.prod([space.mass[i] for i in tup])
        e = sum(lam[p, q] * space.dist[full[p], full[q]] for p, q in pair_order(m))
        total += w * math.exp(-e)
    del pts
    return total


def test_pair_order_puts_root_row_first():
    assert pair_order(2) == [(0, 1), (0, 2), (1, 2)]


def test_exact_examples():
    d = dmd_exact(FiniteMMSpace([[0.0]], 0, [3.0]), 2)
    assert d.tri.tolist() == [[0.0, 0.0, 0.0]] and d.weight.tolist() == [9.0]
    d = dmd_exact(FiniteMMSpace([[0, 1], [1, 0]], 0, [0.0, 2.0]), 1)
    assert d.tri.tolist() == [[1.0]] and d.weight.tolist() == [2.0]
    d = dmd_exact(two_points(), 1)
    assert d.tri.tolist() == [[0.0], [1.0]] and d.weight.tolist() == [1.0, 1.0]
    big = FiniteMMSpace(np.abs(np.subtract.outer(np.arange(101.0), np.arange(101.0))), 0,
                        np.ones(101))
    with pytest.raises(SizeLimitExceeded):
        dmd_exact(big, 3)


def test_exact_total_weight():
    x = random_space(np.random.default_rng(4), 6, zero_frac=0)
    for m in (1, 2, 3):
        assert math.isclose(dmd_exact(x, m).total_weight, x.total_mass ** m, rel_tol=1e-12)


def test_sample_examples():
    d = dmd_sample(FiniteMMSpace([[0.0]], 0, [2.0]), 2, 100, 1)
    assert np.all(d.tri == 0) and math.isclose(d.total_weight, 4.0)
    x = two_points()
    a, b = dmd_sample(x, 2, 500, 9), dmd_sample(x, 2, 500, 9)
    assert np.array_equal(a.tri, b.tri) and np.array_equal(a.weight, b.weight)
    with pytest.raises(EmptySupport):
        dmd_sample(FiniteMMSpace([[0.0]], 0, [0.0]), 1, 10, 0)


def test_sample_concentrates_on_exact():
    x = two_points()
    d = dmd_sample(x, 1, 10**5, 2024)
    w1 = d.weight[d.tri[:, 0] == 1.0].sum()
    # each draw lands on the far point with probability 1/2; weight per draw is 2/n
    se = 2 * math.sqrt(0.25 / 10**5)
    assert abs(w1 - 1.0) < 3 * se


def test_sample_matches_exact_atoms():
    x = FiniteMMSpace([[0, 1, 2], [1, 0, 1.5], [2, 1.5, 0]], 0, [0.5, 1.0, 1.5])
    n = 10**5
    for m in (1, 2):
        ex = dmd_exact(x, m)
        sm = dmd_sample(x, m, n, 77)
        total = x.total_mass ** m
        for row, w in zip(ex.tri, ex.weight):
            p = w / total
            got = sm.weight[np.all(sm.tri == row, axis=1)].sum()
            assert abs(got - w) <= 4 * total * math.sqrt(p * (1 - p) / n)


def test_sample_batches_do_not_depend_on_size_split():
    x = two_points(1.0, 2.0)
    a = dmd_sample(x, 1, 70000, 5)
    b = dmd_sample(x, 1, 70000, 5)
    assert np.array_equal(a.weight, b.weight)


def test_discrepancy_examples():
    a = EmpiricalDMD(1, np.array([[0.5]]), np.array([1.0]))
    assert dmd_discrepancy(a, a) == 0.0
    b = EmpiricalDMD(1, np.array([[0.8]]), np.array([1.0]))
    assert dmd_discrepancy(a, b) == pytest.approx(0.3, abs=1e-15)
    c = EmpiricalDMD(1, np.array([[0.5]]), np.array([2.0]))
    assert dmd_discrepancy(a, c) == 1.0
    with pytest.raises(DimensionMismatch):
        dmd_discrepancy(a, EmpiricalDMD(2, np.zeros((1, 3)), np.ones(1)))


def test_polynomial_examples():
    x = two_points()
    assert polynomial_eval(x, 2, np.zeros((3, 3))) == 4.0
    assert polynomial_eval(FiniteMMSpace([[0.0]], 0, [1.5]), 2, np.ones((3, 3))) == 2.25
    assert polynomial_eval(x, 1, [[0, 1], [1, 0]]) == 1 + math.exp(-1)


@given(seeds, st.integers(1, 3))
def test_polynomial_matches_tuple_sum(seed, m):
    rng = np.random.default_rng(seed)
    x = random_space(rng, 5)
    lam = rng.random((m + 1, m + 1)) * 2
    assert math.isclose(polynomial_eval(x, m, lam), brute_polynomial(x, m, lam),
                        rel_tol=1e-12, abs_tol=1e-300)


@given(seeds, st.integers(1, 3))
def test_projection_consistency(seed, m):
    rng = np.random.default_rng(seed)
    x = random_space(rng, 7)
    rd = np.unique(x.root_dist)
    R = float(rng.random() * 1.5)
    if np.any(rd == R):
        return
    full = restrict_dmd(dmd_exact(x, m), R)
    direct = dmd_exact(restrict(x, R), m)
    assert np.array_equal(full.tri, direct.tri)
    assert np.array_equal(full.weight, direct.weight)


@given(seeds)
def test_equivalent_spaces_have_equal_distributions(seed):
    rng = np.random.default_rng(seed)
    x = random_space(rng, 6)
    perm = rng.permutation(x.point_count)
    y = FiniteMMSpace(x.dist[np.ix_(perm, perm)], int(np.flatnonzero(perm == x.root)[0]),
                      x.mass[perm])
    assert check_equivalence(x, y)
    for m in (1, 2):
        assert dmd_discrepancy(dmd_exact(x, m), dmd_exact(y, m)) <= 1e-12


def test_json_round_trip():
    d = dmd_exact(random_space(np.random.default_rng(1), 4), 2)
    e = EmpiricalDMD.from_json(d.to_json())
    assert np.array_equal(d.tri, e.tri) and np.array_equal(d.weight, e.weight)
