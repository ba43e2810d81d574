import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mwwdr.data import Dataset


@pytest.fixture
def four_row_dataset():
    """treated y = (1, 3), control y = (2, 4)."""
    return Dataset(z=[1, 1, 0, 0], y=[1.0, 3.0, 2.0, 4.0])


def random_dataset(rng, n=None, p=1, both_arms=True, count=False):
    """Small random dataset helper shared by the oracle-comparison tests."""
    n = n if n is not None else int(rng.integers(4, 7))
    while True:
        z = (rng.random(n) < 0.5).astype(int)
        if not both_arms or 0 < z.sum() < n:
            break
    if count:
        y = rng.integers(0, 4, size=n).astype(float)
    else:
        y = rng.normal(0, 1, n)
    w = rng.normal(0, 1, (n, p)) if p else None
    kind = "count" if count else "continuous"
    return Dataset(z, y, w, outcome_kind=kind)
