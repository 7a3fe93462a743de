import numpy as np
from hypothesis import settings

from mmconv.core import FiniteMMSpace, euclidean_space

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def random_space(rng: np.random.Generator, n_max: int = 8, dim: int = 2,
                 zero_frac: float = 0.25) -> FiniteMMSpace:
    n = int(rng.integers(1, n_max + 1))
    pts = rng.random((n, dim))
    mass = rng.random(n) * 3
    mass[rng.random(n) < zero_frac] = 0.0
    return euclidean_space(pts, mass, root=int(rng.integers(n)))


def two_points(m0=1.0, m1=1.0, d=1.0) -> FiniteMMSpace:
    return FiniteMMSpace([[0.0, d], [d, 0.0]], 0, [m0, m1])


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
