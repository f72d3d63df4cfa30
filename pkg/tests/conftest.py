from __future__ import annotations

import numpy as np
import pytest


# Central differences with h=1e-5 carry O(h^2) ~ 1e-10 absolute error, so relative
# error is measured against max(|a|, |b|, floor) with floor = 1e-4.
FD_FLOOR = 1e-4


def rel_err(a: float, b: float, floor: float = FD_FLOOR) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def central_diff(f, arr: np.ndarray, index, h: float = 1e-5) -> float:
    """Central finite difference of scalar ``f()`` w.r.t. ``arr[index]`` (mutated in place)."""
    old = arr[index]
    arr[index] = old + h
    fp = f()
    arr[index] = old - h
    fm = f()
    arr[index] = old
    return (fp - fm) / (2.0 * h)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
