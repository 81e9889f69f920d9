import itertools

import numpy as np
import pytest

from sparsedense.oracle import DiscreteDistribution
from sparsedense.sampling import Shift, apply_shift


def orbit_uniform_distribution(base, shifts):
    """Uniform distribution over the orbit of a base image (exactly invariant)."""
    n = base.shape[0]
    orbit = {}
    for s in shifts:
        img = apply_shift(base, Shift(*s))
        orbit[img.tobytes()] = img
    return DiscreteDistribution(n, tuple((img, 1.0 / len(orbit)) for img in orbit.values()))


def two_valued_distribution(n, values=(1.0, 2.0)):
    """Uniform law over all two-valued n x n images."""
    atoms = []
    total = 2 ** (n * n)
    for bits in itertools.product(values, repeat=n * n):
        atoms.append((np.array(bits).reshape(n, n), 1.0 / total))
    return DiscreteDistribution(n, tuple(atoms))


@pytest.fixture
def fixed_observation_example():
    """n=2 instance where the distribution is shift-invariant but the mask is not."""
    from sparsedense.verify import fixed_observation_counterexample

    return fixed_observation_counterexample()
