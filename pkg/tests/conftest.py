import numpy as np
import pytest

from ebpoisson import DiscretePrior, EmpiricalPMF


def philox(seed, stream=0):
    """Counter-based generator so individual tests stay order-independent."""
    return np.random.Generator(
        np.random.Philox(key=np.array([seed, stream], dtype=np.uint64)))


def random_prior(rng, max_atoms=5, hi=8.0):
    k = int(rng.integers(1, max_atoms + 1))
    atoms = np.sort(rng.uniform(0.0, hi, k))
    while np.any(np.diff(atoms) < 1e-6):
        atoms = np.sort(rng.uniform(0.0, hi, k))
    w = rng.dirichlet(np.ones(k))
    return DiscretePrior.from_points(atoms, w)


def random_pmf(rng, max_support=8):
    ys = np.sort(rng.choice(np.arange(12), size=int(rng.integers(2, max_support)),
                            replace=False))
    w = rng.dirichlet(np.ones(ys.size))
    return EmpiricalPMF.from_probabilities(ys, w)


@pytest.fixture
def rng():
    return philox(20240816)
