"""Distance-matrix distributions of finite pointed mm-spaces.

An m-point distribution is the law of the mutual distances between the root
and m points drawn from the (unnormalized) measure. A matrix is stored as its
upper triangle in the order (0,1), (0,2), ..., (0,m), (1,2), ..., so the first
m entries are distances to the root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import FiniteMMSpace
from .errors import DimensionMismatch, EmptySupport, SizeLimitExceeded, ValidationError
from .metrics import prohorov_cross
from .seeding import rng_for

ENUMERATION_LIMIT = 10**6
SAMPLE_BATCH = 1 << 16


def pair_order(m: int) -> list[tuple[int, int]]:
    return [(p, q) for p in range(m + 1) for q in range(p + 1, m + 1)]


@dataclass(frozen=True, eq=False)
class EmpiricalDMD:
    """Finitely supported measure on (m+1)x(m+1) distance matrices."""

    m: int
    tri: np.ndarray      # shape (atoms, m(m+1)/2)
    weight: np.ndarray   # shape (atoms,)

    @property
    def total_weight(self) -> float:
        return math.fsum(self.weight)

    def __len__(self) -> int:
        return self.weight.size

    def to_json(self) -> dict:
        return {"m": self.m,
                "atoms": [{"tri": [float(x) for x in row], "w": float(w)}
                          for row, w in zip(self.tri, self.weight)]}

    @classmethod
    def from_json(cls, obj: dict) -> "EmpiricalDMD":
        m = int(obj["m"])
        k = m * (m + 1) // 2
        atoms = obj["atoms"]
        tri = np.array([a["tri"] for a in atoms], dtype=np.float64).reshape(len(atoms), k)
        w = np.array([a["w"] for a in atoms], dtype=np.float64)
        return cls(m, tri, w)


def _merge(m: int, tri: np.ndarray, w: np.ndarray) -> EmpiricalDMD:
    if tri.shape[0] == 0:
        return EmpiricalDMD(m, tri.reshape(0, m * (m + 1) // 2), w)
    uniq, inv = np.unique(tri, axis=0, return_inverse=True)
    weights = np.bincount(inv.reshape(-1), weights=w, minlength=uniq.shape[0])
    return EmpiricalDMD(m, uniq, weights)


def _matrices(space: FiniteMMSpace, idx: np.ndarray) -> np.ndarray:
    """Distance-matrix rows for tuples of point indices (column 0 is the root)."""
    full = np.concatenate([np.full((idx.shape[0], 1), space.root), idx], axis=1)
    cols = [space.dist[full[:, p], full[:, q]] for p, q in pair_order(idx.shape[1])]
    return np.stack(cols, axis=1)


def dmd_exact(space: FiniteMMSpace, m: int) -> EmpiricalDMD:
    """All ``|supp|**m`` tuples, weighted by mass products, identical matrices merged."""
    if m < 1:
        raise ValidationError("m must be positive")
    supp = space.support()
    if supp.size ** m > ENUMERATION_LIMIT:
        raise SizeLimitExceeded(f"{supp.size}^{m} tuples exceed {ENUMERATION_LIMIT}")
    if supp.size == 0:
        return _merge(m, np.zeros((0, m * (m + 1) // 2)), np.zeros(0))
    grids = np.meshgrid(*([supp] * m), indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)
    w = np.prod(space.mass[idx], axis=1)
    return _merge(m, _matrices(space, idx), w)


def dmd_sample(space: FiniteMMSpace, m: int, n_samples: int, seed: int) -> EmpiricalDMD:
    """Monte Carlo estimate from ``n_samples`` draws of ``m`` i.i.d. points.

    Draws happen in fixed-size batches, each with its own child seed, so the
    result does not depend on how batches are scheduled.
    """
    if m < 1 or n_samples < 1:
        raise ValidationError("m and n_samples must be positive")
    total = space.total_mass
    if total <= 0:
        raise EmptySupport("cannot sample from a zero measure")
    supp = space.support()
    p = space.mass[supp] / space.mass[supp].sum()
    chunks = []
    for b, start in enumerate(range(0, n_samples, SAMPLE_BATCH)):
        size = min(SAMPLE_BATCH, n_samples - start)
        rng = rng_for(seed, b)
        chunks.append(supp[rng.choice(supp.size, size=(size, m), p=p)])
    idx = np.concatenate(chunks, axis=0)
    w = np.full(n_samples, total ** m / n_samples)
    return _merge(m, _matrices(space, idx), w)


def restrict_dmd(d: EmpiricalDMD, R: float) -> EmpiricalDMD:
    """Atoms whose root distances are all at most ``R``."""
    keep = np.all(d.tri[:, :d.m] <= R, axis=1)
    return EmpiricalDMD(d.m, d.tri[keep], d.weight[keep])


def atom_cross(a: EmpiricalDMD, b: EmpiricalDMD) -> np.ndarray:
    """Max-entry distances between the atoms of ``a`` and ``b``."""
    out = np.zeros((len(a), len(b)))
    for k in range(a.tri.shape[1]):
        np.maximum(out, np.abs(a.tri[:, k, None] - b.tri[None, :, k]), out=out)
    return out


def dmd_discrepancy(a: EmpiricalDMD, b: EmpiricalDMD) -> float:
    """Prohorov distance between two distributions under the max-entry metric."""
    if a.m != b.m:
        raise DimensionMismatch(f"m = {a.m} vs m = {b.m}")
    return prohorov_cross(a.weight, b.weight, atom_cross(a, b))


def polynomial_eval(space: FiniteMMSpace, m: int, lambdas) -> float:
    """Integral of ``prod exp(-lambda_pq * r_pq)`` against the m-point distribution.

    ``lambdas`` is an (m+1)x(m+1) matrix (upper triangle used) or a vector in
    pair order.
    """
    lam = np.asarray(lambdas, dtype=np.float64)
    if lam.ndim == 2:
        if lam.shape != (m + 1, m + 1):
            raise DimensionMismatch(f"lambda matrix must be {(m + 1, m + 1)}")
        lam = np.array([lam[p, q] for p, q in pair_order(m)])
    if lam.shape != (m * (m + 1) // 2,):
        raise DimensionMismatch("wrong number of rates")
    if np.any(lam < 0):
        raise ValidationError("rates must be nonnegative")
    d = dmd_exact(space, m)
    return math.fsum(d.weight * np.exp(-(d.tri @ lam)))


__all__ = [
    "EmpiricalDMD", "pair_order", "dmd_exact", "dmd_sample", "restrict_dmd",
    "atom_cross", "dmd_discrepancy", "polynomial_eval",
]
