import numpy as np
import pytest

from hankelgp import ComplexExponential, Fourier1D, Hilbert, Polynomial


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def make_family(name, ms):
    if name == "polynomial":
        return Polynomial(ms)
    if name == "complex-exponential":
        return ComplexExponential(ms)
    if name == "hilbert":
        return Hilbert(ms, [1.0 + 0.25 * d for d in range(len(ms))])
    if name == "fourier":
        return Fourier1D(ms[0], 0.7)
    raise ValueError(name)


def brute_precision(family, X):
    """Phi^T Phi straight from the definition, one basis product at a time."""
    Phi = np.array([[_phi(family, j, x) for j in range(family.num_features)] for x in X])
    Phi = Phi.reshape(len(X), family.num_features)
    return Phi.T @ Phi


def _phi(family, flat, x):
    if isinstance(family, Fourier1D):
        return family.eval_1d(0, flat + 1, x[0])
    idx = np.unravel_index(flat, family.ms)
    out = 1.0
    for d, i in enumerate(idx):
        out = out * family.eval_1d(d, int(i) + 1, x[d])
    return out
