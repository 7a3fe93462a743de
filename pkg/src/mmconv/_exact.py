"""Exactly rounded mass sums.

Ball masses are sums of stored float masses. To make pointwise lower-mass
queries and the step-function profile agree bit for bit, every sum is
computed exactly and rounded once. When all masses are integer multiples of a
common power of two with an int64-safe total, the sums are done in int64;
otherwise we fall back to ``math.fsum`` (also exactly rounded).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


LIMIT = 1 << 61


def integer_masses(mass: np.ndarray):
    """Split masses into exact int64 limbs.

    Returns ``(hi, lo, shift, exponent)`` with
    ``mass == (hi * 2**shift + lo) * 2**exponent`` exactly and both limb
    totals below 2**61, or None when the masses span too many bits.
    """
    mass = np.asarray(mass, dtype=np.float64)
    pos = mass > 0
    hi = np.zeros(mass.shape, np.int64)
    lo = np.zeros(mass.shape, np.int64)
    if not pos.any():
        return hi, lo, 0, 0
    mant, expo = np.frexp(mass[pos])
    # mant * 2**53 is an integer, so every mass is a multiple of 2**(expo - 53)
    low = int(expo.min()) - 53
    ints = [int(math.ldexp(float(x), -low)) for x in mass[pos]]
    # drop trailing zero bits so the scale stays as coarse as possible
    tz = min((v & -v).bit_length() - 1 for v in ints)
    ints = [v >> tz for v in ints]
    low += tz
    total = sum(ints)
    if total < LIMIT:
        lo[pos] = ints
        return hi, lo, 62, low
    shift = 61 - len(ints).bit_length()
    mask = (1 << shift) - 1
    if sum(v >> shift for v in ints) >= LIMIT:
        return None
    hi[pos] = [v >> shift for v in ints]
    lo[pos] = [v & mask for v in ints]
    return hi, lo, shift, low


def combine(hi: int, lo: int, shift: int) -> int:
    return (int(hi) << shift) + int(lo)


def to_float(total: int, exponent: int) -> float:
    return math.ldexp(float(int(total)), exponent)


def exact_sum(values) -> float:
    return math.fsum(values)


@njit(cache=True)
def _less(h1, l1, h2, l2, shift):
    # limbs are not normalized; compare the exact values hi * 2**shift + lo
    if shift >= 62:
        return h1 < h2 or (h1 == h2 and l1 < l2)
    a = h1 + (l1 >> shift)
    b = h2 + (l2 >> shift)
    if a != b:
        return a < b
    mask = (np.int64(1) << shift) - 1
    return (l1 & mask) < (l2 & mask)


@njit(cache=True)
def _profile_sweep(d_sorted, centre_slot, w_hi, w_lo, shift, n_centres):
    """Lower envelope of ball-mass step functions.

    Events are (distance, centre, added weight) sorted by distance. Returns the
    distinct distances and the limbs of the minimum over centres after each group.
    """
    size = 1
    while size < n_centres:
        size *= 2
    big = np.iinfo(np.int64).max
    th = np.full(2 * size, big, np.int64)
    tl = np.zeros(2 * size, np.int64)
    for c in range(n_centres):
        th[size + c] = 0
    for p in range(size - 1, 0, -1):
        th[p] = min(th[2 * p], th[2 * p + 1])
    n = d_sorted.shape[0]
    bps = np.empty(n, np.float64)
    vh = np.empty(n, np.int64)
    vl = np.empty(n, np.int64)
    g = 0
    i = 0
    while i < n:
        d = d_sorted[i]
        while i < n and d_sorted[i] == d:
            p = size + centre_slot[i]
            th[p] += w_hi[i]
            tl[p] += w_lo[i]
            p //= 2
            while p >= 1:
                a, b = 2 * p, 2 * p + 1
                if _less(th[b], tl[b], th[a], tl[a], shift):
                    a = b
                th[p] = th[a]
                tl[p] = tl[a]
                p //= 2
            i += 1
        bps[g] = d
        vh[g] = th[1]
        vl[g] = tl[1]
        g += 1
    return bps[:g], vh[:g], vl[:g]
