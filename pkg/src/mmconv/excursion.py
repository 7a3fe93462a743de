"""Piecewise-linear excursions and the trees they encode.

An excursion is a continuous nonnegative function with ``e(0) = 0``. Times
``s`` and ``t`` are glued when ``e(s) = e(t) = min over [s, t] of e``; the
quotient carries the tree distance ``e(s) + e(t) - 2 min_[s,t] e`` and the
image of Lebesgue measure. Interval minima are computed exactly from the
breakpoints, never by sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .core import FiniteMMSpace
from .errors import NotTransient, ValidationError


@dataclass(frozen=True)
class Compact:
    pass


@dataclass(frozen=True)
class TransientLinear:
    slope: float


class Kind(Enum):
    COMPACTLY_SUPPORTED = "compactly_supported"
    TRANSIENT = "transient"


@dataclass(frozen=True, eq=False)
class PLExcursion:
    t: np.ndarray
    y: np.ndarray
    tail: Compact | TransientLinear

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if t.size == 0 or t.size != y.size:
            raise ValidationError("breakpoint times and heights must be nonempty and equal length")
        if t[0] != 0 or y[0] != 0:
            raise ValidationError("an excursion starts at (0, 0)")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise ValidationError("breakpoints must be finite")
        if np.any(np.diff(t) <= 0):
            raise ValidationError("breakpoint times must be strictly increasing")
        if np.any(y < 0):
            raise ValidationError("heights must be nonnegative")
        if isinstance(self.tail, Compact):
            if y[-1] != 0:
                raise ValidationError("a compact excursion ends at height 0")
            if not np.any(y > 0):
                raise ValidationError("an excursion is not identically zero")
        elif isinstance(self.tail, TransientLinear):
            if not (self.tail.slope > 0 and math.isfinite(self.tail.slope)):
                raise ValidationError("transient tail needs a positive finite slope")
        else:
            raise ValidationError(f"unknown tail {self.tail!r}")
        t.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]], tail=Compact()) -> "PLExcursion":
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return cls(pts[:, 0], pts[:, 1], tail)

    @property
    def transient(self) -> bool:
        return isinstance(self.tail, TransientLinear)

    @property
    def length(self) -> float:
        """Excursion length: the last zero for compact excursions, infinity otherwise."""
        return float(self.t[-1]) if not self.transient else math.inf

    def __call__(self, s):
        return evaluate(self, s)

    def to_json(self) -> dict:
        tail = ({"kind": "compact"} if not self.transient
                else {"kind": "linear", "slope": float(self.tail.slope)})
        return {"bp": [[float(a), float(b)] for a, b in zip(self.t, self.y)], "tail": tail}

    @classmethod
    def from_json(cls, obj: dict) -> "PLExcursion":
        try:
            kind = obj["tail"]["kind"]
            if kind == "compact":
                tail = Compact()
            elif kind == "linear":
                tail = TransientLinear(float(obj["tail"]["slope"]))
            else:
                raise ValidationError(f"unknown tail kind {kind!r}")
            return cls.from_points(obj["bp"], tail)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed excursion JSON: {exc}") from exc


def evaluate(e: PLExcursion, s):
    s_arr = np.asarray(s, dtype=np.float64)
    if np.any(s_arr < 0):
        raise ValidationError("times must be nonnegative")
    out = np.interp(s_arr, e.t, e.y)
    if e.transient:
        beyond = s_arr > e.t[-1]
        out = np.where(beyond, e.y[-1] + e.tail.slope * (s_arr - e.t[-1]), out)
    return float(out) if out.ndim == 0 else out


def classify(e: PLExcursion) -> Kind:
    return Kind.TRANSIENT if e.transient else Kind.COMPACTLY_SUPPORTED


def interval_min(e: PLExcursion, s: float, t: float) -> float:
    """Exact minimum of ``e`` over ``[s, t]``."""
    if s > t:
        s, t = t, s
    lo = min(evaluate(e, s), evaluate(e, t))
    inside = e.y[(e.t > s) & (e.t < t)]
    return float(min(lo, inside.min())) if inside.size else float(lo)


def tree_distance(e: PLExcursion, s: float, t: float) -> float:
    """``e(s) + e(t) - 2 min_[s,t] e``, written as a sum of two nonnegative gaps."""
    m = interval_min(e, s, t)
    return (evaluate(e, s) - m) + (evaluate(e, t) - m)


def last_exit(e: PLExcursion, R: float) -> float:
    """``sup {s : e(s) < R}`` for a transient excursion."""
    if not e.transient:
        raise NotTransient("last exit times need a transient excursion")
    if not R > 0:
        raise ValidationError("R must be positive")
    if R > e.y[-1]:
        return float(e.t[-1] + (R - e.y[-1]) / e.tail.slope)
    # R <= final height: the answer is on the last segment that dips below R;
    # after it e stays >= R, so that segment ends at height >= R
    below = np.flatnonzero(np.minimum(e.y[:-1], e.y[1:]) < R)
    k = int(below[-1])   # nonempty since e(0) = 0 < R
    y0, y1 = e.y[k], e.y[k + 1]
    t0, t1 = e.t[k], e.t[k + 1]
    return float(t0 + (R - y0) / (y1 - y0) * (t1 - t0))


def end_ray_error(e: PLExcursion, radii: Sequence[float]) -> float:
    """Largest ``| d(xi(R1), xi(R2)) - |R1 - R2| |`` over pairs of radii."""
    if not e.transient:
        raise NotTransient("the end ray exists only for transient excursions")
    radii = [float(r) for r in radii]
    xs = [last_exit(e, r) for r in radii]
    worst = 0.0
    for i in range(len(radii)):
        for j in range(i + 1, len(radii)):
            worst = max(worst, abs(tree_distance(e, xs[i], xs[j]) - abs(radii[i] - radii[j])))
    return worst


def horizon(e: PLExcursion, R: float) -> float:
    """Time beyond which no point of height at most ``R`` is visited."""
    return last_exit(e, R) if e.transient else e.length


def grid(e: PLExcursion, h: float, R: float) -> tuple[np.ndarray, np.ndarray]:
    """Grid times up to the horizon and their cell masses.

    Every multiple of ``h`` up to the horizon carries mass ``h``; a horizon
    that is not a multiple of ``h`` is added as one more point carrying the
    leftover length.
    """
    if not h > 0:
        raise ValidationError("h must be positive")
    if not R > 0:
        raise ValidationError("R must be positive")
    end = horizon(e, R)
    k = int(math.floor(end / h))
    # guard against floor() landing one too high through rounding
    while k > 0 and k * h > end:
        k -= 1
    times = np.arange(k + 1) * h
    mass = np.full(k + 1, h)
    if times[-1] < end:
        times = np.append(times, end)
        mass = np.append(mass, end - k * h)
    return times, mass


def segment_minima(e: PLExcursion, times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """``c[k] = min of e over [times[k], times[k+1]]``, exact."""
    c = np.minimum(values[:-1], values[1:])
    inner = (e.t > times[0]) & (e.t < times[-1])
    bt, by = e.t[inner], e.y[inner]
    if bt.size:
        seg = np.searchsorted(times, bt, side="right") - 1
        # breakpoints sitting on a grid time are already in ``values``
        on_grid = times[seg] == bt
        seg, by = seg[~on_grid], by[~on_grid]
        if seg.size:
            np.minimum.at(c, seg, by)
    return c


def _grid_heights(e: PLExcursion, times: np.ndarray, R: float) -> np.ndarray:
    y = evaluate(e, times)
    if e.transient and times[-1] == last_exit(e, R):
        # the last exit sits at height R by definition; do not let rounding push it out
        y[-1] = R
    return y


def root_distance_measure(e: PLExcursion, h: float, R: float) -> tuple[np.ndarray, np.ndarray]:
    """Distance-to-root law of the glued grid space on the closed R-ball.

    Returns distinct heights and their total cell mass.
    """
    times, mass = grid(e, h, R)
    y = _grid_heights(e, times, R)
    keep = y <= R
    heights, inv = np.unique(y[keep], return_inverse=True)
    return heights, np.bincount(inv.reshape(-1), weights=mass[keep], minlength=heights.size)


def glue_discretize(e: PLExcursion, h: float, R: float) -> FiniteMMSpace:
    """Finite tree from grid times of ``e`` at pitch ``h``, restricted to the R-ball.

    Points are classes of grid times at tree distance exactly 0. Only classes
    within distance ``R`` of the root are materialized; ``labels[i]`` lists
    the grid indices merged into point ``i``.
    """
    times, mass = grid(e, h, R)
    y = _grid_heights(e, times, R)
    c = segment_minima(e, times, y)
    sel = np.flatnonzero(y <= R)
    ys = y[sel]
    # minima between consecutive selected times, then prefix minima per row
    if sel.size > 1:
        gaps = np.minimum.reduceat(c[:sel[-1]], sel[:-1])
    else:
        gaps = np.zeros(0)
    k = sel.size
    mins = np.empty((k, k))
    for a in range(k):
        mins[a, a] = ys[a]
        if a + 1 < k:
            mins[a, a + 1:] = np.minimum.accumulate(gaps[a:])
    iu = np.triu_indices(k, 1)
    mins[iu[1], iu[0]] = mins[iu]
    same = (ys[:, None] == mins) & (ys[None, :] == mins)
    rep = np.argmax(same, axis=1)          # first selected index in the class
    reps, cls = np.unique(rep, return_inverse=True)
    cls = cls.reshape(-1)
    cls_mass = np.bincount(cls, weights=mass[sel], minlength=reps.size)
    sub = mins[np.ix_(reps, reps)]
    yr = ys[reps]
    dist = (yr[:, None] - sub) + (yr[None, :] - sub)
    np.fill_diagonal(dist, 0.0)
    dist = np.maximum(dist, dist.T)
    labels = [[] for _ in range(reps.size)]
    for g, cl in zip(sel, cls):
        labels[cl].append(int(g))
    root = int(cls[0])   # time 0 is always selected and first
    return FiniteMMSpace(dist, root, cls_mass, labels=tuple(tuple(l) for l in labels),
                         check_triangle=False)


def add_perturbation(e: PLExcursion, t: Sequence[float], p: Sequence[float]) -> PLExcursion:
    """``e + p`` for a piecewise-linear ``p`` with ``p(0) = 0``, constant after its last breakpoint.

    The result must stay nonnegative; a transient tail keeps its slope.
    """
    t = np.asarray(t, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if t[0] != 0 or p[0] != 0:
        raise ValidationError("perturbation must start at (0, 0)")
    end = max(e.t[-1], t[-1])
    knots = np.union1d(e.t, t)
    if e.transient and end > e.t[-1]:
        knots = np.union1d(knots, [end])
    elif not e.transient:
        knots = knots[knots <= e.t[-1]]
    base = evaluate(e, knots)
    pert = np.interp(knots, t, p)
    y = base + pert
    if np.any(y < -1e-15):
        raise ValidationError("perturbed excursion goes negative")
    y = np.maximum(y, 0.0)
    y[0] = 0.0
    if not e.transient:
        y[-1] = 0.0
    return PLExcursion(knots, y, e.tail)


__all__ = [
    "Compact", "TransientLinear", "Kind", "PLExcursion", "evaluate", "classify",
    "interval_min", "tree_distance", "last_exit", "end_ray_error", "horizon", "grid",
    "segment_minima", "root_distance_measure", "glue_discretize", "add_perturbation",
]
