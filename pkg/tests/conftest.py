"""Shared fixtures: warm the jitted kernels once so tests that assert wall
-clock budgets measure the algorithms, not one-time compilation."""

import numpy as np
import pytest

from skewfl import _kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    rows = np.random.default_rng(0).standard_normal((3, 4))
    _kernels.pairwise_sq_dists(rows)
    w = np.zeros(2 * 4 + 2)
    vel = np.zeros_like(w)
    x = rows[:2]
    y = np.array([0, 1], dtype=np.int64)
    order = np.array([0, 1], dtype=np.int64)
    _kernels.softmax_sgd(w, vel, x, y, order, 1, 2, 2, 0.1, 0.0, 0.0, 2.0)
    w2 = np.zeros(3 * 4 + 3 + 2 * 3 + 2)
    vel2 = np.zeros_like(w2)
    _kernels.mlp_sgd(w2, vel2, x, y, order, 1, 2, 2, 3, 0.1, 0.0, 0.0, 2.0)
