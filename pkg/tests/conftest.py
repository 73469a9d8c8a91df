import numpy as np
import pytest

from mahakit.rng import CounterRng
from mahakit.scorers import ModelHead


def random_instance(seed, n=120, d=6, c=4, spread=3.0):
    """Labeled Gaussian-ish feature instance plus a random linear head."""
    rng = CounterRng(seed)
    means = spread * rng.standard_normal((c, d))
    labels = rng.integers(n, 0, c)
    # make sure every class appears
    labels[:c] = np.arange(c)
    feats = means[labels] + rng.standard_normal((n, d))
    w = rng.standard_normal((c, d))
    b = 0.5 * rng.standard_normal(c)
    test = means[rng.integers(32, 0, c)] + rng.standard_normal((32, d))
    return feats, labels.astype(np.int64), test, ModelHead(W=w, b=b)


@pytest.fixture
def small_instance():
    return random_instance(1234)
