"""Finite pointed metric measure spaces.

A :class:`FiniteMMSpace` stores a distance matrix, a root index and a mass
vector. Zero-mass points are kept (restriction only zeroes masses), so point
indices stay stable; the support is always computed on demand.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _exact
from .errors import SizeLimitExceeded, ValidationError

METRIC_TOL = 1e-12
EQUIVALENCE_LIMIT = 10


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


def triangle_violation(dist: np.ndarray) -> float:
    """Largest amount by which ``dist[i,k] > dist[i,j] + dist[j,k]``."""
    n = dist.shape[0]
    worst = 0.0
    for j in range(n):
        excess = dist - (dist[:, j, None] + dist[None, j, :])
        worst = max(worst, float(excess.max()))
    return worst


@dataclass(frozen=True, eq=False)
class FiniteMMSpace:
    """Finite pointed metric measure space ``(X, r, root, mu)``.

    ``labels`` is optional per-point bookkeeping (for glued trees: the grid
    indices merged into each point). It is carried through ``restrict`` and
    ``rescale`` and used only to propose correspondences.
    """

    dist: np.ndarray
    root: int
    mass: np.ndarray
    labels: tuple | None = field(default=None)
    check_triangle: bool = field(default=True, repr=False)

    def __post_init__(self):
        dist = np.asarray(self.dist, dtype=np.float64)
        mass = np.asarray(self.mass, dtype=np.float64).reshape(-1)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
            raise ValidationError(f"distance matrix must be square, got shape {dist.shape}")
        n = dist.shape[0]
        if n == 0:
            raise ValidationError("a space needs at least one point")
        if mass.shape[0] != n:
            raise ValidationError(f"{n} points but {mass.shape[0]} masses")
        if not np.all(np.isfinite(dist)) or not np.all(np.isfinite(mass)):
            raise ValidationError("distances and masses must be finite")
        if np.any(mass < 0):
            raise ValidationError("masses must be nonnegative")
        root = int(self.root)
        if not 0 <= root < n:
            raise ValidationError(f"root {root} out of range for {n} points")
        if np.any(np.diag(dist) != 0):
            raise ValidationError("dist[i][i] must be 0")
        if not np.array_equal(dist, dist.T):
            raise ValidationError("distance matrix must be symmetric")
        off = dist[~np.eye(n, dtype=bool)]
        if np.any(off <= 0):
            raise ValidationError("distinct points must be at positive distance")
        if self.check_triangle and n > 2:
            bad = triangle_violation(dist)
            if bad > METRIC_TOL:
                raise ValidationError(f"triangle inequality violated by {bad:.3g}")
        if self.labels is not None and len(self.labels) != n:
            raise ValidationError("labels must have one entry per point")
        object.__setattr__(self, "dist", _frozen(dist))
        object.__setattr__(self, "mass", _frozen(mass))
        object.__setattr__(self, "root", root)

    @property
    def point_count(self) -> int:
        return self.dist.shape[0]

    @property
    def root_dist(self) -> np.ndarray:
        return self.dist[self.root]

    @property
    def total_mass(self) -> float:
        return _exact.exact_sum(self.mass)

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.mass > 0)

    def _replace(self, **kw) -> "FiniteMMSpace":
        args = dict(dist=self.dist, root=self.root, mass=self.mass, labels=self.labels,
                    check_triangle=False)
        args.update(kw)
        return FiniteMMSpace(**args)

    def subspace(self, idx: Sequence[int]) -> "FiniteMMSpace":
        """Sub-space on ``idx``; the root must be among them."""
        idx = np.asarray(idx, dtype=np.int64)
        where = np.flatnonzero(idx == self.root)
        if where.size != 1:
            raise ValidationError("subspace must contain the root exactly once")
        labels = None if self.labels is None else tuple(self.labels[i] for i in idx)
        return FiniteMMSpace(self.dist[np.ix_(idx, idx)], int(where[0]), self.mass[idx],
                             labels=labels, check_triangle=False)

    def compact(self) -> tuple["FiniteMMSpace", np.ndarray]:
        """Drop zero-mass points other than the root; returns (space, kept indices)."""
        keep = np.flatnonzero((self.mass > 0) | (np.arange(self.point_count) == self.root))
        if keep.size == self.point_count:
            return self, keep
        return self.subspace(keep), keep


@dataclass(frozen=True)
class LowerMassProfile:
    """Right-continuous step function ``delta -> value``.

    ``values[k]`` holds on ``[breakpoints[k], breakpoints[k+1])``; the first
    breakpoint is 0, so the first value also covers small positive deltas.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __call__(self, delta):
        k = np.searchsorted(self.breakpoints, delta, side="right") - 1
        k = np.maximum(k, 0)
        out = self.values[k]
        return float(out) if np.ndim(out) == 0 else out


def support_indices(space: FiniteMMSpace) -> list[int]:
    return [int(i) for i in space.support()]


def restrict(space: FiniteMMSpace, R: float) -> FiniteMMSpace:
    """Keep the mass on the closed ball of radius ``R`` around the root."""
    inside = space.root_dist <= R
    if inside.all():
        return space
    return space._replace(mass=np.where(inside, space.mass, 0.0))


def rescale(space: FiniteMMSpace, alpha: float, beta: float) -> FiniteMMSpace:
    if not (alpha > 0 and beta > 0):
        raise ValidationError("rescale factors must be positive")
    return space._replace(dist=space.dist * alpha, mass=space.mass * beta)


def ball_mass(space: FiniteMMSpace, center: int, delta: float) -> float:
    if not 0 <= center < space.point_count:
        raise ValidationError(f"center {center} out of range")
    return _exact.exact_sum(space.mass[space.dist[center] <= delta])


def _centres(space: FiniteMMSpace, R: float) -> np.ndarray:
    supp = space.mass > 0
    return np.flatnonzero(supp & (space.root_dist < R))


def lower_mass(space: FiniteMMSpace, delta: float, R: float) -> float:
    """Smallest closed delta-ball mass over support points in the open R-ball."""
    centres = _centres(space, R)
    if centres.size == 0:
        return math.inf
    near = space.dist[centres] <= delta
    scaled = _exact.integer_masses(space.mass)
    if scaled is None:
        return min(_exact.exact_sum(space.mass[row]) for row in near)
    hi, lo, shift, e = scaled
    near = near.astype(np.int64)
    sh, sl = near @ hi, near @ lo
    if shift < 62:
        sh, sl = sh + (sl >> shift), sl & ((1 << shift) - 1)
    k = int(np.lexsort((sl, sh))[0])
    return _exact.to_float(_exact.combine(sh[k], sl[k], shift), e)


def global_lower_mass(space: FiniteMMSpace, delta: float) -> float:
    return lower_mass(space, delta, float(space.root_dist.max()) + 1.0)


def lower_mass_profile(space: FiniteMMSpace, R: float | None = None,
                       max_delta: float | None = None) -> LowerMassProfile:
    """Exact step function ``delta -> lower_mass(space, delta, R)``.

    ``R=None`` gives the global profile. ``max_delta`` truncates the sweep;
    the returned profile is then only valid on ``[0, max_delta]``.
    """
    if R is None:
        R = float(space.root_dist.max()) + 1.0
    centres = _centres(space, R)
    if centres.size == 0:
        return LowerMassProfile(np.array([0.0]), np.array([math.inf]))
    supp = space.support()
    sub = space.dist[np.ix_(centres, supp)]
    if max_delta is not None:
        mask = sub <= max_delta
    else:
        mask = np.ones(sub.shape, dtype=bool)
    ci, sj = np.nonzero(mask)
    d = sub[ci, sj]
    scaled = _exact.integer_masses(space.mass)
    if scaled is None:
        # rare: masses too spread for int64, evaluate every distinct radius directly
        bps = np.unique(np.concatenate([[0.0], d]))
        vals = np.array([lower_mass(space, float(b), R) for b in bps])
    else:
        hi, lo, shift, e = scaled
        order = np.argsort(d, kind="stable")
        cols = supp[sj[order]]
        bps, vh, vl = _exact._profile_sweep(d[order], ci[order].astype(np.int64), hi[cols],
                                            lo[cols], shift, centres.size)
        vals = np.array([_exact.to_float(_exact.combine(h, l, shift), e)
                         for h, l in zip(vh.tolist(), vl.tolist())])
    keep = np.ones(bps.size, dtype=bool)
    keep[1:] = vals[1:] != vals[:-1]
    bps, vals = bps[keep], vals[keep]
    bps = bps.copy()
    bps[0] = 0.0
    return LowerMassProfile(bps, vals)


def find_isometry(a: FiniteMMSpace, b: FiniteMMSpace, tol: float = 1e-9,
                  limit: int = EQUIVALENCE_LIMIT) -> dict[int, int] | None:
    """Root-preserving, measure-preserving isometry between supports plus roots.

    Backtracking search; raises SizeLimitExceeded when a support exceeds ``limit``.
    """
    sa, sb = a.support(), b.support()
    if sa.size > limit or sb.size > limit:
        raise SizeLimitExceeded(f"supports of size {sa.size}, {sb.size} exceed {limit}")
    pa = [a.root] + [int(i) for i in sa if i != a.root]
    pb = [b.root] + [int(j) for j in sb if j != b.root]
    if len(pa) != len(pb):
        return None
    if abs(a.mass[a.root] - b.mass[b.root]) > tol:
        return None
    # most constrained first: order A points by root distance
    rest = sorted(pa[1:], key=lambda i: (a.dist[a.root, i], i))
    order = [a.root] + rest
    assign: dict[int, int] = {a.root: b.root}
    used = {b.root}

    def extend(k: int) -> bool:
        if k == len(order):
            return True
        x = order[k]
        for y in pb[1:]:
            if y in used or abs(a.mass[x] - b.mass[y]) > tol:
                continue
            if all(abs(a.dist[x, xi] - b.dist[y, assign[xi]]) <= tol for xi in order[:k]):
                assign[x] = y
                used.add(y)
                if extend(k + 1):
                    return True
                del assign[x]
                used.discard(y)
        return False

    return dict(assign) if extend(1) else None


def check_equivalence(a: FiniteMMSpace, b: FiniteMMSpace, tol: float = 1e-9) -> bool:
    return find_isometry(a, b, tol) is not None


# -- JSON -----------------------------------------------------------------

def space_to_json(space: FiniteMMSpace, compact: bool = False) -> dict:
    out = {"points": space.point_count, "root": space.root}
    if compact:
        i, j = np.tril_indices(space.point_count, -1)
        out["tri"] = [float(x) for x in space.dist[i, j]]
    else:
        out["dist"] = [[float(x) for x in row] for row in space.dist]
    out["mass"] = [float(x) for x in space.mass]
    return out


def space_from_json(obj: dict) -> FiniteMMSpace:
    try:
        n = int(obj["points"])
        root = int(obj["root"])
        mass = np.asarray(obj["mass"], dtype=np.float64)
        if "dist" in obj:
            dist = np.asarray(obj["dist"], dtype=np.float64)
        elif "tri" in obj:
            tri = np.asarray(obj["tri"], dtype=np.float64)
            if tri.size != n * (n - 1) // 2:
                raise ValidationError(f"'tri' needs {n * (n - 1) // 2} entries, got {tri.size}")
            dist = np.zeros((n, n))
            i, j = np.tril_indices(n, -1)
            dist[i, j] = tri
            dist[j, i] = tri
        else:
            raise ValidationError("space JSON needs 'dist' or 'tri'")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"malformed space JSON: {exc}") from exc
    if dist.shape != (n, n):
        raise ValidationError(f"'points' is {n} but distance matrix has shape {dist.shape}")
    return FiniteMMSpace(dist, root, mass)


def dumps(obj) -> str:
    """JSON with round-trip float formatting (``repr``), stable key order."""
    return json.dumps(obj, indent=None, separators=(",", ":"), allow_nan=True)


def points_on_line(xs: Sequence[float], masses: Sequence[float], root: int = 0) -> FiniteMMSpace:
    """Convenience constructor for points on the real line."""
    xs = np.asarray(xs, dtype=np.float64)
    return FiniteMMSpace(np.abs(xs[:, None] - xs[None, :]), root, masses)


def euclidean_space(points: np.ndarray, masses, root: int = 0,
                    check_triangle: bool = True) -> FiniteMMSpace:
    from scipy.spatial.distance import cdist

    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    d = cdist(pts, pts)
    d = np.maximum(d, d.T)
    np.fill_diagonal(d, 0.0)
    return FiniteMMSpace(d, root, masses, check_triangle=check_triangle)


__all__ = [
    "FiniteMMSpace", "LowerMassProfile", "support_indices", "restrict", "rescale",
    "ball_mass", "lower_mass", "global_lower_mass", "lower_mass_profile",
    "find_isometry", "check_equivalence", "space_to_json", "space_from_json",
    "points_on_line", "euclidean_space",
]
