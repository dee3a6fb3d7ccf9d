import math

import numpy as np
import pytest

from nchf.grid import GridSpec


def circle_map(grid, L=2):
    x = grid.coords()[0]
    f = np.zeros(grid.shape + (L,))
    f[..., 0] = np.cos(x)
    f[..., 1] = np.sin(x)
    return f


def torus_map(grid):
    """``(cos x1, sin x1, cos x2, sin x2) / sqrt 2``."""
    x1, x2 = grid.coords()[:2]
    f = np.stack([np.cos(x1), np.sin(x1), np.cos(x2), np.sin(x2)], axis=-1)
    return f / math.sqrt(2)


@pytest.fixture
def grid2():
    return GridSpec(2, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
