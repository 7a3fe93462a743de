"""Seed splitting.

Every random stream is derived from a master seed and an integer stream id via
``numpy.random.SeedSequence([master mod 2**64, stream_id])``. The mapping is a
fixed hash, so child streams do not depend on scheduling or worker count.
"""

from __future__ import annotations

import numpy as np

_U64 = 1 << 64


def child_seed(master: int, *stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master) % _U64, *(int(s) % _U64 for s in stream)])


def rng_for(master: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(child_seed(master, *stream))
