"""Convergence experiments and their reports.

Each ``run_*`` function takes a plain-dict config, fans the per-index work
out over a process pool, and returns a :class:`ConvergenceReport` whose CSV
form is byte-identical for a given config regardless of the worker count.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy import stats
from scipy.special import gamma

from .core import (
    FiniteMMSpace,
    euclidean_space,
    global_lower_mass,
    lower_mass,
    rescale,
    space_from_json,
)
from .errors import InsufficientSteps, SizeLimitExceeded, ValidationError
from .excursion import glue_discretize, root_distance_measure
from .metrics import (
    SearchParams,
    ghp_ub,
    hausdorff,
    localized,
    prohorov,
    union_from_embedding,
)
from .sampling import dmd_discrepancy, dmd_exact, dmd_sample, restrict_dmd
from .seeding import rng_for
from .treegen import (
    LatticePath,
    bessel3_em,
    brownian_path,
    embedded_walk,
    geometric_offspring,
    gw_tree,
    path_excursion,
    pitman_transform,
    reflected_walk_from_steps,
    tree_measures,
    walk_excursion,
)

SCHEMA_VERSION = 1


# -- reports -----------------------------------------------------------------

@dataclass
class ConvergenceReport:
    kind: str
    config: dict
    columns: list[str]
    rows: list[dict]
    flags: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema mmconv-report/{SCHEMA_VERSION} kind={self.kind}\n")
        buf.write("# config " + json.dumps(self.config, sort_keys=True) + "\n")
        buf.write("# meta " + json.dumps(self.meta, sort_keys=True) + "\n")
        buf.write("# flags " + json.dumps(self.flags, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_cell(r.get(c)) for c in self.columns])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"schema": SCHEMA_VERSION, "kind": self.kind, "config": self.config,
                "meta": self.meta, "flags": self.flags, "columns": self.columns,
                "rows": [{c: r.get(c) for c in self.columns} for r in self.rows]}


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def trend_passes(values, threshold: float) -> bool:
    """Last three values strictly decreasing (or all exactly 0), last one at most ``threshold``."""
    vals = [v for v in values if v is not None]
    if len(vals) < 3:
        return False
    a, b, c = vals[-3:]
    shape_ok = (a > b > c) or (a == b == c == 0)
    return bool(shape_ok and c <= threshold)


def _fan_out(fn: Callable, tasks: list, workers: int) -> list:
    """Apply ``fn`` to every task; the result order follows ``tasks``."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _need(cfg: dict, key: str):
    if key not in cfg:
        raise ValidationError(f"config is missing {key!r}")
    return cfg[key]


def _positive_int(cfg: dict, key: str, default=None) -> int:
    v = cfg.get(key, default)
    if v is None:
        raise ValidationError(f"config is missing {key!r}")
    if int(v) != v or int(v) < 1:
        raise ValidationError(f"{key} must be a positive integer")
    return int(v)


def _increasing(vals, key: str) -> list[float]:
    vals = [float(v) for v in vals]
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ValidationError(f"{key} must be increasing")
    return vals


# -- spaces for sequences --------------------------------------------------------

DEFAULT_SPACE = {"points": 4, "root": 0,
                 "dist": [[0.0, 1.0, 2.5, 4.0], [1.0, 0.0, 1.5, 3.0],
                          [2.5, 1.5, 0.0, 1.5], [4.0, 3.0, 1.5, 0.0]],
                 "mass": [1.0, 0.5, 2.0, 1.0]}


def cube_space(dim: int, eps: float, points: int, seed: int) -> FiniteMMSpace:
    """Unit cube rooted at a corner: mass ``1 - eps`` at the root plus ``eps`` spread over uniform points."""
    pts = rng_for(seed, dim).random((points, dim))
    allpts = np.vstack([np.zeros((1, dim)), pts])
    mass = np.concatenate([[1.0 - eps], np.full(points, eps / points)])
    return euclidean_space(allpts, mass, root=0, check_triangle=False)


def corner_ball_mass(dim: int, eps: float, delta: float) -> float:
    """``eps`` times the volume of a radius-``delta`` ball around a cube corner (``delta <= 1``)."""
    return eps * math.pi ** (dim / 2) / gamma(dim / 2 + 1) * delta**dim / 2**dim


def _sequence_pair(cfg: dict, n: int) -> tuple[FiniteMMSpace, FiniteMMSpace]:
    gen = cfg["generator"]
    name = gen["name"]
    if name == "cube":
        eps = float(gen.get("eps", 0.1))
        X = cube_space(n, eps, int(gen.get("mc_points", 2000)), int(cfg["seed"]))
        Y = FiniteMMSpace(np.zeros((1, 1)), 0, [1.0 - eps])
        return X, Y
    base = space_from_json(cfg.get("space", DEFAULT_SPACE))
    if name == "constant":
        return base, base
    if name == "mass_perturb":
        return rescale(base, 1.0, 1.0 + 1.0 / n), base
    if name == "distance_perturb":
        return rescale(base, 1.0 + 1.0 / n, 1.0), base
    raise ValidationError(f"unknown generator {name!r}")


def _dmd(space: FiniteMMSpace, m: int, cfg: dict, stream: int):
    try:
        return dmd_exact(space, m)
    except SizeLimitExceeded:
        return dmd_sample(space, m, int(cfg.get("dmd_samples", 20000)), int(cfg["seed"]) + stream)


def _sequence_row(args) -> dict:
    cfg, n = args
    X, Y = _sequence_pair(cfg, n)
    search = SearchParams.from_json(cfg.get("search", {}))
    R = cfg.get("R")
    row: dict[str, Any] = {"n": n}
    rad = cfg.get("dmd_radius")
    for m in cfg["m_list"]:
        a, b = _dmd(X, m, cfg, 1000 * n + m), _dmd(Y, m, cfg, m)
        if rad is not None:
            a, b = restrict_dmd(a, rad), restrict_dmd(b, rad)
        row[f"dmd_m{m}"] = dmd_discrepancy(a, b)
    for d in cfg["deltas"]:
        row[f"lower_mass_{d!r}"] = (global_lower_mass(X, d) if R is None
                                    else lower_mass(X, d, float(R)))
    row["ghp_ub"] = ghp_ub(X, Y, search)
    row["localized_gp"] = localized("GP", X, Y, search)
    cap = int(cfg.get("sghp_support_cap", 400))
    size = max(X.support().size, Y.support().size)
    if size <= cap:
        row["localized_sghp"] = localized("SGHP", X, Y, search)
        row["note"] = ""
    else:
        row["localized_sghp"] = None
        row["note"] = f"localized_sghp skipped: support {size} > cap {cap}"
    if cfg["generator"]["name"] == "cube":
        eps = float(cfg["generator"].get("eps", 0.1))
        N = int(cfg["generator"].get("mc_points", 2000))
        dl = float(cfg.get("corner_delta", 0.1))
        if n <= 3:
            c = corner_ball_mass(n, eps, dl)
            p = c / eps
            row["corner_exact"] = c
            row["corner_se"] = eps * math.sqrt(p * (1 - p) / N)
        else:
            row["corner_exact"] = None
            row["corner_se"] = None
        row["corner_mc"] = global_lower_mass(X, dl)
    return row


def _sequence_defaults(cfg: dict) -> dict:
    cfg = dict(cfg)
    cfg.setdefault("seed", 0)
    cfg.setdefault("m_list", [1])
    cfg.setdefault("deltas", [0.1])
    cfg.setdefault("R", None)
    cfg.setdefault("n0", 1)
    cfg.setdefault("thresholds", {})
    th = dict(cfg["thresholds"])
    th.setdefault("weak", 0.05)
    th.setdefault("ghw", 0.05)
    th.setdefault("mass", 1e-3)
    cfg["thresholds"] = th
    if "indices" not in cfg:
        raise ValidationError("config is missing 'indices'")
    if not cfg["indices"] or any(int(i) != i or i < 1 for i in cfg["indices"]):
        raise ValidationError("indices must be positive integers")
    _increasing(cfg["indices"], "indices")
    _increasing(cfg["deltas"], "deltas")
    if any(int(m) != m or m < 1 for m in cfg["m_list"]):
        raise ValidationError("m_list must hold positive integers")
    if "generator" not in cfg or "name" not in cfg["generator"]:
        raise ValidationError("config needs generator.name")
    return cfg


def run_sequence(config: dict, workers: int = 1) -> ConvergenceReport:
    cfg = _sequence_defaults(config)
    rows = _fan_out(_sequence_row, [(cfg, int(n)) for n in cfg["indices"]], workers)
    rows.sort(key=lambda r: r["n"])
    th = cfg["thresholds"]
    n0 = int(cfg["n0"])
    weak = all(trend_passes([r[f"dmd_m{m}"] for r in rows], th["weak"]) for m in cfg["m_list"])
    lm = [r[f"lower_mass_{d!r}"] for r in rows if r["n"] >= n0 for d in cfg["deltas"]]
    mass_ok = bool(lm) and min(lm) > th["mass"]
    flags = {"gromov_weak_trend": weak, "mass_bound_holds": mass_ok,
             "ghw_trend": trend_passes([r["ghp_ub"] for r in rows], th["ghw"])}
    cols = (["n"] + [f"dmd_m{m}" for m in cfg["m_list"]]
            + [f"lower_mass_{d!r}" for d in cfg["deltas"]]
            + ["ghp_ub", "localized_gp", "localized_sghp"])
    if cfg["generator"]["name"] == "cube":
        cols += ["corner_mc", "corner_exact", "corner_se"]
    cols.append("note")
    meta = {"n0": n0, "thresholds": th, "seed": cfg["seed"]}
    return ConvergenceReport("sequence", cfg, cols, rows, flags, meta)


def run_cube(config: dict, workers: int = 1) -> ConvergenceReport:
    """Unit cubes of growing dimension against the one-point space of mass ``1 - eps``."""
    cfg = dict(config)
    dims = cfg.pop("dims", [1, 2, 3, 4, 5])
    if max(dims) > 6:
        raise ValidationError("cube dimensions are limited to 6")
    gen = {"name": "cube", "eps": float(cfg.pop("eps", 0.1)),
           "mc_points": _positive_int(cfg, "mc_points", 2000)}
    cfg.pop("mc_points", None)
    cfg.setdefault("dmd_radius", 1.0)
    cfg.setdefault("sghp_support_cap", 400)
    seq = dict(cfg, generator=gen, indices=list(dims))
    rep = run_sequence(seq, workers)
    rep.kind = "cube"
    return rep


# -- measure swap ------------------------------------------------------------

def _swap_row(args) -> dict:
    cfg, idx, alpha = args
    h = float(cfg["h"]) * alpha
    R = float(cfg["R"])
    sample = gw_tree(geometric_offspring(), int(cfg["seed"]) * 1_000_003 + idx,
                     int(cfg["node_cap"]))
    tm = tree_measures(sample.tree, alpha, h)
    nodes = np.arange(tm.node_count)
    grid_pts = np.arange(tm.dist.shape[0])
    diam = float(tm.dist.max())
    rd = tm.dist[tm.root]
    row: dict[str, Any] = {"tree": idx, "alpha": alpha, "h": h, "nodes": tm.node_count,
                           "diameter": diam}
    row["hausdorff"] = hausdorff(nodes, grid_pts, tm.dist)
    row["hausdorff_bound"] = alpha
    if diam < R:
        row["case"] = "bounded"
        row["pr_deg"] = prohorov(tm.degree, tm.length, tm.dist)
        row["pr_deg_bound"] = alpha / 2 + h
        row["pr_nod"] = prohorov(tm.node, tm.length, tm.dist)
        row["pr_nod_bound"] = alpha + h
    else:
        row["case"] = "boundary"
        inside = rd <= R
        shell = tm.length[(rd >= R - alpha / 2) & (rd <= R + alpha / 2)].sum()
        row["pr_deg"] = prohorov(np.where(inside, tm.degree, 0), np.where(inside, tm.length, 0),
                                 tm.dist)
        row["pr_deg_bound"] = max(alpha / 2, float(shell)) + h
        row["pr_nod"] = prohorov(np.where(inside, tm.node, 0), np.where(inside, tm.length, 0),
                                 tm.dist)
        row["pr_nod_bound"] = None
    ok = (row["hausdorff"] <= row["hausdorff_bound"] and row["pr_deg"] <= row["pr_deg_bound"]
          and (row["pr_nod_bound"] is None or row["pr_nod"] <= row["pr_nod_bound"]))
    row["bounds_hold"] = bool(ok)
    if cfg.get("localized", True):
        same = union_from_embedding(grid_pts, grid_pts, tm.dist)
        lam = tm.space("length")
        row["localized_gp_deg"] = localized("GP", tm.space("degree"), lam, None, [same])
        row["localized_gp_nod"] = localized("GP", tm.space("node"), lam, None, [same])
    return row


def run_measure_swap(config: dict, workers: int = 1) -> ConvergenceReport:
    """Node and degree measures against grid length measure on random trees."""
    cfg = dict(config)
    cfg.setdefault("seed", 0)
    cfg.setdefault("trees", 20)
    cfg.setdefault("alphas", [1.0])
    cfg.setdefault("h", 0.25)
    cfg.setdefault("R", 6.0)
    cfg.setdefault("node_cap", 200)
    _positive_int(cfg, "trees")
    tasks = [(cfg, i, float(a)) for i in range(int(cfg["trees"])) for a in cfg["alphas"]]
    rows = _fan_out(_swap_row, tasks, workers)
    rows.sort(key=lambda r: (r["tree"], r["alpha"]))
    cols = ["tree", "alpha", "h", "nodes", "diameter", "case", "hausdorff", "hausdorff_bound",
            "pr_deg", "pr_deg_bound", "pr_nod", "pr_nod_bound", "bounds_hold"]
    if cfg.get("localized", True):
        cols += ["localized_gp_deg", "localized_gp_nod"]
    flags = {"bounds_hold": all(r["bounds_hold"] for r in rows)}
    return ConvergenceReport("swap", cfg, cols, rows, flags, {"seed": cfg["seed"]})


# -- Kallenberg ------------------------------------------------------------

def _cdf_pair(heights: np.ndarray, weights: np.ndarray, xs: np.ndarray):
    """Mass at most ``x`` and strictly below ``x`` for every grid value."""
    order = np.argsort(heights, kind="stable")
    h, w = heights[order], np.cumsum(weights[order])
    w = np.concatenate([[0.0], w])
    return w[np.searchsorted(h, xs, side="right")], w[np.searchsorted(h, xs, side="left")]


def _extend(values: np.ndarray, n_more: int, dt: float, seed: int, trial: int, k: int):
    inc = rng_for(seed, trial, k).standard_normal(n_more) * math.sqrt(dt)
    return np.concatenate([values, values[-1] + np.cumsum(inc)])


def _kallenberg_trial(args) -> dict:
    cfg, trial = args
    seed = int(cfg["seed"])
    n_list = [int(n) for n in cfg["n_list"]]
    R = float(cfg["R"])
    nmax = max(n_list)
    dt = 1.0 / (int(cfg["fine_factor"]) * nmax**2)
    chunk = int(round(float(cfg["horizon"]) / dt))
    margin = float(cfg["exit_margin"])
    b = brownian_path(chunk, chunk * dt, rng_for(seed, trial).integers(2**63))
    vals = b.values
    k = 0
    while True:
        path = LatticePath(vals, dt)
        x = pitman_transform(path)
        walks = {}
        ok = x.values[-1] > margin * R
        if ok:
            for n in n_list:
                steps, _ = embedded_walk(path, n)
                w = reflected_walk_from_steps(steps) if steps.size else LatticePath([0.0])
                if not w.values[-1] / n > margin * R:
                    ok = False
                    break
                walks[n] = w
        if ok:
            break
        k += 1
        if k > int(cfg["max_extensions"]):
            raise InsufficientSteps(f"trial {trial}: path did not clear {margin * R} in time")
        vals = _extend(vals, chunk, dt, seed, trial, k)
    xs = cfg["_grid"]
    out: dict[str, Any] = {"trial": trial, "extensions": k}
    ce = path_excursion(x, R)
    hgt, wt = root_distance_measure(ce, dt, R)
    out["cont"] = _cdf_pair(hgt, wt, xs)
    pitch = float(cfg["mass_pitch"])
    deltas = cfg["deltas"]
    cont_tree = glue_discretize(ce, pitch, R)
    out["cont_mass"] = [lower_mass(cont_tree, d, R) for d in deltas]
    for n in n_list:
        e = walk_excursion(walks[n], n, R)
        hgt, wt = root_distance_measure(e, 1.0 / n**2, R)
        out[f"disc_{n}"] = _cdf_pair(hgt, wt, xs)
        tree = glue_discretize(e, pitch, R)
        out[f"disc_mass_{n}"] = [lower_mass(tree, d, R) for d in deltas]
    return out


def _ks_from_sums(a: tuple, b: tuple) -> float:
    fa, fa_left = a
    fb, fb_left = b
    ta, tb = fa[-1], fb[-1]
    if ta <= 0 or tb <= 0:
        return 1.0
    return float(max(np.abs(fa / ta - fb / tb).max(), np.abs(fa_left / ta - fb_left / tb).max()))


def run_kallenberg(config: dict, workers: int = 1) -> ConvergenceReport:
    """Distance-to-root laws of rescaled discrete Kallenberg trees against the continuum tree.

    Every trial draws one fine Brownian path. The continuum tree is glued
    from its Pitman transform; the discrete walk at scale ``n`` is embedded
    in the same path, so all scales share randomness within a trial.
    """
    cfg = dict(config)
    cfg.setdefault("seed", 0)
    cfg.setdefault("n_list", [16, 64, 128])
    cfg.setdefault("R", 1.0)
    cfg.setdefault("trials", 200)
    cfg.setdefault("deltas", [0.1])
    cfg.setdefault("horizon", 8.0)
    cfg.setdefault("fine_factor", 16)
    cfg.setdefault("exit_margin", 1.0)
    cfg.setdefault("max_extensions", 50)
    cfg.setdefault("mass_pitch", 0.01)
    cfg.setdefault("grid_points", 2001)
    cfg.setdefault("threshold", 0.1)
    if _positive_int(cfg, "trials") < 50:
        raise ValidationError("trials must be at least 50")
    _increasing(cfg["n_list"], "n_list")
    _increasing(cfg["deltas"], "deltas")
    R = float(cfg["R"])
    grid = [np.linspace(0.0, R, int(cfg["grid_points"]))]
    for n in cfg["n_list"]:
        grid.append(np.arange(int(math.floor(R * n)) + 1) / n)
    xs = np.unique(np.concatenate(grid))
    run_cfg = dict(cfg, _grid=xs)
    results = _fan_out(_kallenberg_trial, [(run_cfg, t) for t in range(int(cfg["trials"]))],
                       workers)
    results.sort(key=lambda r: r["trial"])

    def total(key):
        f = sum(r[key][0] for r in results)
        g = sum(r[key][1] for r in results)
        return f, g

    cont = total("cont")
    cont_mass = np.mean([r["cont_mass"] for r in results], axis=0)
    rows = []
    for n in cfg["n_list"]:
        row: dict[str, Any] = {"n": int(n), "ks": _ks_from_sums(total(f"disc_{n}"), cont)}
        dm = np.mean([r[f"disc_mass_{n}"] for r in results], axis=0)
        for d, v, c in zip(cfg["deltas"], dm, cont_mass):
            row[f"mean_lower_mass_{d!r}"] = float(v)
            row[f"cont_lower_mass_{d!r}"] = float(c)
        rows.append(row)
    ks = [r["ks"] for r in rows]
    flags = {"ks_decreasing": all(b < a for a, b in zip(ks, ks[1:])),
             "ks_trend": trend_passes(ks, float(cfg["threshold"]))}
    cols = ["n", "ks"]
    for d in cfg["deltas"]:
        cols += [f"mean_lower_mass_{d!r}", f"cont_lower_mass_{d!r}"]
    meta = {"seed": cfg["seed"], "threshold": cfg["threshold"],
            "extensions": sum(r["extensions"] for r in results)}
    return ConvergenceReport("kallenberg", cfg, cols, rows, flags, meta)


def _endpoint_pair(args):
    seed, i, n_grid = args
    b = brownian_path(n_grid, 1.0, rng_for(seed, 0, i).integers(2**63))
    s = bessel3_em(n_grid, 1.0, rng_for(seed, 1, i).integers(2**63))
    return float(pitman_transform(b).values[-1]), float(s.values[-1])


def generator_agreement(samples: int, n_grid: int, seed: int, workers: int = 1) -> dict:
    """Two-sample KS between time-1 values of the Pitman and Euler-Maruyama Bessel generators."""
    pairs = _fan_out(_endpoint_pair, [(seed, i, n_grid) for i in range(samples)], workers)
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    ks = float(stats.ks_2samp(a, b).statistic)
    crit = 1.628 * math.sqrt(2.0 / samples)
    return {"ks": ks, "critical_1pct": crit, "agree": ks < crit}


RUNNERS = {"sequence": run_sequence, "cube": run_cube, "swap": run_measure_swap,
           "kallenberg": run_kallenberg}

__all__ = [
    "ConvergenceReport", "trend_passes", "cube_space", "corner_ball_mass", "run_sequence",
    "run_cube", "run_measure_swap", "run_kallenberg", "generator_agreement", "RUNNERS",
]
