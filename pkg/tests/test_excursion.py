import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mmconv.core import check_equivalence, FiniteMMSpace
from mmconv.errors import NotTransient, ValidationError
from mmconv.excursion import (
    Compact,
    Kind,
    PLExcursion,
    TransientLinear,
    add_perturbation,
    classify,
    end_ray_error,
    evaluate,
    glue_discretize,
    grid,
    last_exit,
    root_distance_measure,
    tree_distance,
)
from mmconv.metrics import gromov_prohorov_ub
from mmconv.sampling import dmd_exact

seeds = st.integers(0, 2**32 - 1)
TENT = PLExcursion.from_points([[0, 0], [1, 1], [2, 0]])
LINE = PLExcursion.from_points([[0, 0], [1, 1]], TransientLinear(1.0))
TENT_TAIL = PLExcursion.from_points([[0, 0], [1, 1], [2, 0]], TransientLinear(1.0))


def random_excursion(rng, transient=None, k=None):
    k = int(rng.integers(2, 12)) if k is None else k
    t = np.concatenate([[0.0], np.cumsum(rng.random(k) + 0.05)])
    y = np.concatenate([[0.0], rng.random(k) * 2])
    if rng.random() < 0.3:
        y[1:-1] = np.round(y[1:-1] * 2) / 2     # repeated heights exercise exact merging
    if transient is None:
        transient = bool(rng.random() < 0.5)
    if transient:
        return PLExcursion(t, y, TransientLinear(float(rng.random() * 2 + 0.1)))
    y[-1] = 0.0
    if not np.any(y > 0):
        y[1] = 1.0
    return PLExcursion(t, y, Compact())


def test_validation():
    with pytest.raises(ValidationError):
        PLExcursion.from_points([[0, 0], [1, 1]])                 # compact must end at 0
    with pytest.raises(ValidationError):
        PLExcursion.from_points([[0, 1], [1, 0]])
    with pytest.raises(ValidationError):
        PLExcursion.from_points([[0, 0], [1, -1], [2, 0]])
    with pytest.raises(ValidationError):
        PLExcursion.from_points([[0, 0], [1, 0]])
    with pytest.raises(ValidationError):
        PLExcursion.from_points([[0, 0], [1, 1]], TransientLinear(0.0))


def test_evaluate_examples():
    assert evaluate(TENT, 0) == 0.0
    assert evaluate(TENT, 0.5) == 0.5
    tail = PLExcursion.from_points([[0, 0], [1, 1], [2, 0]], TransientLinear(1.0))
    assert evaluate(tail, 3.0) == 1.0
    assert evaluate(TENT, 7.0) == 0.0


def test_classify():
    assert classify(TENT) is Kind.COMPACTLY_SUPPORTED
    assert classify(LINE) is Kind.TRANSIENT
    assert classify(TENT_TAIL) is Kind.TRANSIENT


def test_tree_distance_examples():
    assert tree_distance(TENT, 0.7, 0.7) == 0.0
    assert tree_distance(LINE, 0.25, 3.0) == 2.75
    assert tree_distance(TENT, 0.5, 1.5) == 0.0
    assert tree_distance(TENT, 1.5, 0.25) == tree_distance(TENT, 0.25, 1.5) == 0.25


def test_last_exit_examples():
    assert last_exit(LINE, 5.0) == 5.0
    assert last_exit(TENT_TAIL, 0.5) == 2.5
    e = PLExcursion.from_points([[0, 0], [1, 3], [2, 1]], TransientLinear(2.0))
    assert last_exit(e, 4.0) == 3.5
    assert last_exit(e, 2.0) == 2.5
    f = PLExcursion.from_points([[0, 0], [1, 3], [2, 1], [3, 4]], TransientLinear(2.0))
    assert last_exit(f, 2.5) == 2.5         # crossing inside the final interior segment
    assert last_exit(f, 3.5) == 2 + 2.5 / 3
    with pytest.raises(NotTransient):
        last_exit(TENT, 1.0)


def test_glue_tent():
    x = glue_discretize(TENT, 0.5, 2.0)
    assert x.root_dist.tolist() == [0.0, 0.5, 1.0]
    assert x.mass.tolist() == [1.0, 1.0, 0.5]
    assert x.dist.tolist() == [[0.0, 0.5, 1.0], [0.5, 0.0, 0.5], [1.0, 0.5, 0.0]]
    assert x.labels == ((0, 4), (1, 3), (2,))


def test_glue_line():
    x = glue_discretize(LINE, 1.0, 3.0)
    assert x.root_dist.tolist() == [0.0, 1.0, 2.0, 3.0]
    assert x.mass.tolist() == [1.0, 1.0, 1.0, 1.0]


def test_glue_coarse_grid_is_one_atom():
    for h in (2.0, 3.0):
        x = glue_discretize(TENT, h, 5.0)
        assert x.point_count == 1


def test_grid_mass_convention():
    times, mass = grid(TENT, 0.3, 1.0)
    assert times[-1] == 2.0 and math.isclose(mass.sum(), 2.0 + 0.3)


def brute_glue(e, h, R):
    """Pairwise tree distances on the grid and union-find classes, one pair at a time."""
    times, mass = grid(e, h, R)
    keep = [i for i, t in enumerate(times) if evaluate(e, t) <= R + 1e-12]
    parent = {i: i for i in keep}

    def find(i):
        while parent[i] != i:
            i = parent[i]
        return i

    for a in keep:
        for b in keep:
            if a < b and tree_distance(e, times[a], times[b]) == 0:
                parent[find(b)] = find(a)
    classes = sorted({find(i) for i in keep})
    pos = {c: k for k, c in enumerate(classes)}
    d = np.array([[tree_distance(e, times[a], times[b]) for b in classes] for a in classes])
    m = np.zeros(len(classes))
    for i in keep:
        m[pos[find(i)]] += mass[i]
    return d, m


@given(seeds, st.sampled_from([0.5, 0.25, 0.1]), st.floats(0.3, 3))
def test_glue_matches_brute_force(seed, h, R):
    e = random_excursion(np.random.default_rng(seed))
    x = glue_discretize(e, h, R)
    d, m = brute_glue(e, h, R)
    assert np.allclose(x.dist, d, atol=1e-12, rtol=0)
    assert np.allclose(x.mass, m, atol=1e-12, rtol=0)


@given(seeds)
def test_four_point_condition(seed):
    rng = np.random.default_rng(seed)
    e = random_excursion(rng)
    top = e.t[-1] + (1.0 if e.transient else 0.0)
    for _ in range(20):
        s, t, u, v = rng.random(4) * top
        if rng.random() < 0.3:
            s, t = e.t[rng.integers(e.t.size)], e.t[rng.integers(e.t.size)]
        d = lambda a, b: tree_distance(e, a, b)
        lhs = d(s, t) + d(u, v)
        assert lhs <= max(d(s, u) + d(t, v), d(s, v) + d(t, u)) + 1e-12
        assert d(s, t) == d(t, s)
        assert d(s, u) <= d(s, t) + d(t, u) + 1e-12


@given(seeds)
def test_end_ray_is_isometric(seed):
    rng = np.random.default_rng(seed)
    e = random_excursion(rng, transient=True)
    radii = list(rng.random(6) * 4 + 0.01) + list(np.unique(e.y[e.y > 0]))
    assert end_ray_error(e, radii) <= 1e-12
    assert end_ray_error(LINE, [1.0, 2.0, 7.5]) == 0.0
    assert end_ray_error(e, [1.0]) == 0.0


@given(seeds, st.sampled_from([0.5, 0.2, 0.05]), st.floats(0.3, 3))
def test_total_mass_is_horizon_plus_pitch(seed, h, R):
    e = random_excursion(np.random.default_rng(seed))
    big = float(np.max(e.y)) + R + 1 if e.transient else float(np.max(e.y)) + 1
    x = glue_discretize(e, h, big)
    end = last_exit(e, big) if e.transient else e.t[-1]
    assert math.isclose(x.total_mass, end + h, rel_tol=1e-12)


@given(seeds, st.floats(0.2, 2.5))
def test_root_distance_measure_is_one_point_distribution(seed, R):
    e = random_excursion(np.random.default_rng(seed))
    heights, weights = root_distance_measure(e, 0.1, R)
    d = dmd_exact(glue_discretize(e, 0.1, R), 1)
    assert np.array_equal(heights, d.tri[:, 0])
    assert np.allclose(weights, d.weight, rtol=1e-12, atol=0)


def test_refinement_consistency():
    rng = np.random.default_rng(12)
    for e in (TENT, random_excursion(rng, transient=False, k=6)):
        vals = [gromov_prohorov_ub(glue_discretize(e, h, 5.0), glue_discretize(e, h / 2, 5.0))
                for h in (0.2, 0.1, 0.05, 0.025)]
        assert all(b < a for a, b in zip(vals, vals[1:])), vals


def test_perturbation():
    e = add_perturbation(TENT_TAIL, [0, 1.5, 4], [0, 0.1, 0.1])
    assert evaluate(e, 1.5) == evaluate(TENT_TAIL, 1.5) + 0.1
    assert evaluate(e, 10.0) == pytest.approx(evaluate(TENT_TAIL, 10.0) + 0.1)
    assert e.tail == TENT_TAIL.tail


def test_json_round_trip():
    for e in (TENT, TENT_TAIL):
        f = PLExcursion.from_json(e.to_json())
        assert np.array_equal(e.t, f.t) and np.array_equal(e.y, f.y) and e.tail == f.tail


def test_glue_of_equal_excursions_is_equivalent():
    a = glue_discretize(TENT, 0.5, 2.0)
    b = glue_discretize(PLExcursion.from_points([[0, 0], [0.5, 0.5], [1, 1], [2, 0]]), 0.5, 2.0)
    assert check_equivalence(a, b)
    assert isinstance(a, FiniteMMSpace)
