import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hncl.numcore import l2_normalize_rows, make_rng


@pytest.fixture
def rng():
    return make_rng(1234)


def random_unit_rows(rng, n, d):
    return l2_normalize_rows(rng.normal(size=(n, d)))


def random_batch(rng, n, d):
    """A pair of unit-row matrices with correlated positives, as produced by
    two projection heads looking at the same instances."""
    base = rng.normal(size=(n, d))
    z_s = l2_normalize_rows(base + 0.5 * rng.normal(size=(n, d)))
    z_i = l2_normalize_rows(base + 0.5 * rng.normal(size=(n, d)))
    return z_s, z_i
