"""Random trees and the paths that encode them.

Graph trees come with three natural measures: unit mass on non-root nodes,
half the degree on every node, and length measure sampled on a grid along
the edges. Reflected random walks (``W - 2 min W``) encode the discrete
Kallenberg tree; the same transform of Brownian motion gives the continuum
tree.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .core import FiniteMMSpace
from .errors import (
    GridMismatch,
    HorizonTooShort,
    InsufficientSteps,
    InvalidDistribution,
    ValidationError,
)
from .excursion import PLExcursion, TransientLinear, Compact, glue_discretize
from .seeding import rng_for

BESSEL_START = 1e-3


# -- graph trees -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GraphTree:
    parent: np.ndarray
    root: int

    def __post_init__(self):
        parent = np.asarray(self.parent, dtype=np.int64).reshape(-1)
        n = parent.size
        root = int(self.root)
        if n == 0:
            raise ValidationError("a tree needs at least one node")
        if not 0 <= root < n or parent[root] != root:
            raise ValidationError("parent[root] must equal root")
        if np.any((parent < 0) | (parent >= n)):
            raise ValidationError("parent index out of range")
        if np.count_nonzero(parent == np.arange(n)) != 1:
            raise ValidationError("exactly one node may be its own parent")
        # every node must reach the root: depth by repeated parent lookup
        reached = np.zeros(n, dtype=bool)
        reached[root] = True
        for v in range(n):
            path = []
            u = v
            while not reached[u]:
                if len(path) > n:
                    raise ValidationError("parent pointers contain a cycle")
                path.append(u)
                u = parent[u]
            reached[path] = True
        parent.setflags(write=False)
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "root", root)

    @property
    def size(self) -> int:
        return self.parent.size

    def edges(self) -> np.ndarray:
        kids = np.flatnonzero(np.arange(self.size) != self.root)
        return np.stack([self.parent[kids], kids], axis=1)

    def degree(self) -> np.ndarray:
        deg = np.zeros(self.size, dtype=np.int64)
        e = self.edges()
        np.add.at(deg, e[:, 0], 1)
        np.add.at(deg, e[:, 1], 1)
        return deg

    def hop_distances(self) -> np.ndarray:
        return _hops(self.size, self.edges())

    def to_json(self) -> dict:
        return {"parent": [int(p) for p in self.parent], "root": self.root}

    @classmethod
    def from_json(cls, obj: dict) -> "GraphTree":
        try:
            return cls(np.asarray(obj["parent"], dtype=np.int64), int(obj["root"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed tree JSON: {exc}") from exc


def _hops(n: int, edges: np.ndarray) -> np.ndarray:
    if n == 1:
        return np.zeros((1, 1))
    g = csr_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    return shortest_path(g, directed=False, unweighted=True)


@dataclass(frozen=True)
class GWSample:
    tree: GraphTree
    truncated: bool
    extinct: bool


def gw_tree(offspring: Sequence[float], seed: int, node_cap: int) -> GWSample:
    """Breadth-first Galton-Watson tree, stopped once ``node_cap`` nodes exist."""
    p = np.asarray(offspring, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
        raise InvalidDistribution("offspring law must be a probability vector")
    if node_cap < 1:
        raise ValidationError("node_cap must be positive")
    rng = rng_for(seed, 0)
    parent = [0]
    queue = deque([0])
    truncated = False
    while queue:
        v = queue.popleft()
        kids = int(rng.choice(p.size, p=p))
        for _ in range(kids):
            if len(parent) >= node_cap:
                truncated = True
                break
            parent.append(v)
            queue.append(len(parent) - 1)
        if truncated:
            break
    return GWSample(GraphTree(np.array(parent), 0), truncated, not truncated)


def geometric_offspring(cutoff: int = 64) -> np.ndarray:
    """``p_k = 2^-(k+1)``, with the tail beyond ``cutoff`` folded into the last entry."""
    p = 0.5 ** (np.arange(cutoff) + 1.0)
    p[-1] += 1.0 - p.sum()
    return p


@dataclass(frozen=True)
class NodeMeasure:
    pass


@dataclass(frozen=True)
class DegreeMeasure:
    pass


@dataclass(frozen=True)
class LengthGrid:
    h: float


def _subdivide(tree: GraphTree, edge_len: float, h: float):
    k = int(round(edge_len / h))
    if k < 1 or k * h != edge_len:
        raise GridMismatch(f"pitch {h} does not divide edge length {edge_len}")
    n = tree.size
    edges = tree.edges()
    sub = []
    nxt = n
    for u, v in edges:
        chain = [int(u)] + list(range(nxt, nxt + k - 1)) + [int(v)]
        nxt += k - 1
        sub.extend(zip(chain[:-1], chain[1:]))
    sub = np.array(sub, dtype=np.int64).reshape(-1, 2)
    return nxt, sub


@dataclass(frozen=True, eq=False)
class TreeMeasures:
    """Node, degree and grid-length measures on one grid space (nodes first)."""

    dist: np.ndarray
    root: int
    node_count: int
    node: np.ndarray
    degree: np.ndarray
    length: np.ndarray

    def space(self, which: str) -> FiniteMMSpace:
        return FiniteMMSpace(self.dist, self.root, getattr(self, which), check_triangle=False)


def tree_measures(tree: GraphTree, edge_len: float, h: float) -> TreeMeasures:
    """Node, degree and grid-length measures on the subdivided tree.

    Node and degree masses are scaled by ``edge_len`` so that all three
    measures have the same total mass at every edge length.
    """
    if not edge_len > 0:
        raise ValidationError("edge length must be positive")
    total, sub = _subdivide(tree, edge_len, h)
    hops = _hops(total, sub)
    dist = hops * h
    deg_sub = np.zeros(total)
    np.add.at(deg_sub, sub[:, 0], 1.0)
    np.add.at(deg_sub, sub[:, 1], 1.0)
    length = deg_sub * (h / 2)
    node = np.zeros(total)
    node[:tree.size] = edge_len
    node[tree.root] = 0.0
    degree = np.zeros(total)
    degree[:tree.size] = tree.degree() * (edge_len / 2)
    return TreeMeasures(dist, tree.root, tree.size, node, degree, length)


def graph_to_mmspace(tree: GraphTree, edge_len: float, measure) -> FiniteMMSpace:
    """Tree as a pointed mm-space with node, degree or grid-length measure."""
    if not edge_len > 0:
        raise ValidationError("edge length must be positive")
    if isinstance(measure, LengthGrid):
        return tree_measures(tree, edge_len, measure.h).space("length")
    dist = tree.hop_distances() * edge_len
    if isinstance(measure, NodeMeasure):
        mass = np.ones(tree.size)
        mass[tree.root] = 0.0
    elif isinstance(measure, DegreeMeasure):
        mass = tree.degree() / 2
    else:
        raise ValidationError(f"unknown measure {measure!r}")
    return FiniteMMSpace(dist, tree.root, mass, check_triangle=False)


# -- paths ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LatticePath:
    """Heights at times ``0, step, 2*step, ...``; linear in between."""

    values: np.ndarray
    step: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if v.size == 0 or v[0] != 0:
            raise ValidationError("paths start at 0")
        if not self.step > 0:
            raise ValidationError("step must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.step


def _running_min(v: np.ndarray) -> np.ndarray:
    return np.minimum.accumulate(np.minimum(v, 0.0))


def pitman_transform(path: LatticePath) -> LatticePath:
    """``X_t - 2 min_{s<=t} X_s`` pointwise."""
    v = path.values
    return LatticePath(v - 2 * _running_min(v), path.step)


def walk_from_steps(steps: Sequence[int]) -> LatticePath:
    s = np.asarray(steps, dtype=np.int64)
    if np.any(np.abs(s) != 1):
        raise ValidationError("walk steps must be +1 or -1")
    return LatticePath(np.concatenate([[0], np.cumsum(s)]).astype(np.float64))


def reflected_walk_from_steps(steps: Sequence[int]) -> LatticePath:
    return pitman_transform(walk_from_steps(steps))


def reflected_walk(n_steps: int, seed: int) -> LatticePath:
    if n_steps < 1:
        raise ValidationError("n_steps must be positive")
    steps = rng_for(seed, 0).integers(0, 2, size=n_steps) * 2 - 1
    return reflected_walk_from_steps(steps)


def brownian_path(n_grid: int, horizon: float, seed: int) -> LatticePath:
    """Brownian motion on ``[0, horizon]`` sampled at ``n_grid`` equal steps."""
    if n_grid < 1 or not horizon > 0:
        raise ValidationError("n_grid and horizon must be positive")
    dt = horizon / n_grid
    inc = rng_for(seed, 0).standard_normal(n_grid) * math.sqrt(dt)
    return LatticePath(np.concatenate([[0.0], np.cumsum(inc)]), dt)


@njit(cache=True)
def _bessel_em(z, dt, x0):
    out = np.empty(z.size + 1)
    out[0] = 0.0
    x = x0
    sq = math.sqrt(dt)
    for k in range(z.size):
        x = abs(x + dt / x + sq * z[k])
        if x == 0.0:
            x = x0
        out[k + 1] = x
    return out


def bessel3_em(n_grid: int, horizon: float, seed: int, x0: float = BESSEL_START) -> LatticePath:
    """Euler-Maruyama for ``dX = dt/X + dB`` from ``x0``, reflected at 0.

    The stored path starts at 0 (the small start value is an internal offset
    that keeps the drift finite).
    """
    if n_grid < 1 or not horizon > 0:
        raise ValidationError("n_grid and horizon must be positive")
    dt = horizon / n_grid
    z = rng_for(seed, 0).standard_normal(n_grid)
    return LatticePath(_bessel_em(z, dt, float(x0)), dt)


@njit(cache=True)
def _embed(b, spacing):
    """First-exit times of ``b`` from windows of half-width ``spacing`` centred at the last exit."""
    out_idx = np.empty(b.size, np.int64)
    out_sign = np.empty(b.size, np.int64)
    k = 0
    centre = b[0]
    for i in range(1, b.size):
        d = b[i] - centre
        if d >= spacing or d <= -spacing:
            out_idx[k] = i
            out_sign[k] = 1 if d > 0 else -1
            k += 1
            centre = b[i]
    return out_idx[:k], out_sign[:k]


def embedded_walk(path: LatticePath, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Simple random walk read off a fine Brownian path at spatial scale ``1/n``.

    Each step is the sign of the next exit from a window of half-width
    ``1/n`` around the current position, so the steps are i.i.d. fair signs.
    Returns ``(steps, exit times)``.
    """
    idx, sign = _embed(path.values, 1.0 / n)
    return sign, idx * path.step


# -- Kallenberg trees ----------------------------------------------------------

def _path_excursion(times: np.ndarray, heights: np.ndarray, need: float) -> PLExcursion:
    if heights[-1] == 0:
        return PLExcursion(times, heights, Compact())
    if not heights[-1] > need:
        raise InsufficientSteps(f"path ends at height {heights[-1]:.4g}, needs to exceed {need}")
    return PLExcursion(times, heights, TransientLinear(1.0))


def walk_excursion(walk: LatticePath, n: int, R: float) -> PLExcursion:
    """Rescaled reflected walk ``(k / n^2, W_k / n)`` as an excursion.

    A path ending at 0 is compact; otherwise it must finish above ``R`` and a
    unit-slope tail is attached.
    """
    v = walk.values
    return _path_excursion(np.arange(v.size) / n**2, v / n, R)


def kallenberg_from_walk(walk: LatticePath, n: int, R: float, h: float | None = None) -> FiniteMMSpace:
    e = walk_excursion(walk, n, R)
    return glue_discretize(e, 1.0 / n**2 if h is None else h, R)


def kallenberg_discrete(n: int, walk_steps: int, seed: int, R: float) -> FiniteMMSpace:
    """Rescaled discrete Kallenberg tree on the R-ball, glued at pitch ``n^-2``."""
    if n < 1:
        raise ValidationError("n must be positive")
    return kallenberg_from_walk(reflected_walk(walk_steps, seed), n, R)


def path_excursion(path: LatticePath, R: float) -> PLExcursion:
    v = path.values
    if not v[-1] > R:
        raise HorizonTooShort(f"path ends at {v[-1]:.4g}, needs to exceed {R}")
    return PLExcursion(path.times, v, TransientLinear(1.0))


def continuum_kallenberg_sample(horizon: float, n_grid: int, seed: int, R: float,
                                h: float) -> FiniteMMSpace:
    """Continuum Kallenberg tree on the R-ball via the Pitman transform of Brownian motion."""
    x = pitman_transform(brownian_path(n_grid, horizon, seed))
    return glue_discretize(path_excursion(x, R), h, R)


def bessel_kallenberg_sample(horizon: float, n_grid: int, seed: int, R: float,
                             h: float) -> FiniteMMSpace:
    """Same tree driven by the Euler-Maruyama Bessel path; a cross-check generator."""
    x = bessel3_em(n_grid, horizon, seed)
    return glue_discretize(path_excursion(x, R), h, R)


__all__ = [
    "GraphTree", "GWSample", "gw_tree", "geometric_offspring", "NodeMeasure",
    "DegreeMeasure", "LengthGrid", "TreeMeasures", "tree_measures", "graph_to_mmspace",
    "LatticePath", "pitman_transform", "walk_from_steps", "reflected_walk_from_steps",
    "reflected_walk", "brownian_path", "bessel3_em", "embedded_walk", "walk_excursion",
    "kallenberg_from_walk", "kallenberg_discrete", "path_excursion",
    "continuum_kallenberg_sample", "bessel_kallenberg_sample",
]
