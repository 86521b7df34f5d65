import numpy as np
import pytest

from riskcert import ClosedLoopSystem, MomentAmbiguitySet

A = np.array([[1.2, 0.3], [0.0, 0.5]])
B = np.array([[1.0], [0.5]])
E = np.array([[1.0, 2.0], [0.5, -0.5]])
K = np.array([[-0.7, -0.2]])
SIGMA_W = np.array([[0.5, 0.0], [0.0, 0.25]])
X0 = np.array([2.0, 3.0])
EPS = 0.3


@pytest.fixture
def example_cl():
    return ClosedLoopSystem(A, B, E, K, MomentAmbiguitySet(SIGMA_W, EPS))


@pytest.fixture
def example_auto(example_cl):
    return example_cl.autonomous


def random_contractive(rng, n, max_norm=0.9):
    a = rng.standard_normal((n, n))
    return a * (rng.uniform(0.05, max_norm) / np.linalg.norm(a, 2))


def random_psd(rng, n, rank=None):
    g = rng.standard_normal((n, rank or n))
    return g @ g.T
