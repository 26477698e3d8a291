import itertools
import math
import warnings

import numpy as np
import pytest

from hankelgp.basis import (
    ComplexExponential,
    Fourier1D,
    Hilbert,
    Polynomial,
    eval_bf_1d,
    family_from_dict,
    g_function,
    regressor_row,
    structure_descriptor,
)
from hankelgp.exceptions import DomainWarning, UnsupportedConfigurationError
from hankelgp.structured import unique_entry_count


def test_eval_examples():
    assert eval_bf_1d(Hilbert(3, 1.0), 0, 1, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert eval_bf_1d(Polynomial(4), 0, 1, -3.7) == 1.0
    assert eval_bf_1d(Hilbert(3, 1.0), 0, 2, 1.0) == pytest.approx(0.0, abs=1e-15)


def test_hilbert_scaling():
    # L^{-1/2} normalisation
    assert eval_bf_1d(Hilbert(1, 4.0), 0, 1, 0.0) == pytest.approx(0.5)


def test_regressor_row_examples():
    np.testing.assert_array_equal(regressor_row(Polynomial((2, 2)), [2.0, 3.0]), [1, 3, 2, 6])
    np.testing.assert_allclose(regressor_row(Hilbert(3, 1.0), [0.0]), [1, 0, -1], atol=1e-15)
    np.testing.assert_allclose(regressor_row(Fourier1D(2, 1.0), [0.5]),
                               [math.sin(0.5), math.sin(1.0), math.cos(0.5), math.cos(1.0)])


def test_regressor_row_shape_error():
    with pytest.raises(ValueError):
        regressor_row(Polynomial((2, 2)), [1.0])


FAMILIES_2D = [Polynomial((3, 2)), ComplexExponential((2, 3)), Hilbert((3, 3), (1.0, 2.0))]


@pytest.mark.parametrize("fam", FAMILIES_2D, ids=lambda f: type(f).__name__)
def test_outer_product_is_kronecker_of_outer_products(fam, rng):
    x = rng.uniform(-0.9, 0.9, size=2)
    phi = regressor_row(fam, x)
    per_dim = [fam.features_1d(d, x[d])[0] for d in range(2)]
    np.testing.assert_allclose(np.outer(phi, phi),
                               np.kron(np.outer(per_dim[0], per_dim[0]),
                                       np.outer(per_dim[1], per_dim[1])), atol=1e-14)


@pytest.mark.parametrize("fam", [Polynomial((2, 3, 4)), ComplexExponential((4, 1, 2)),
                                 Hilbert((3, 4, 2), (1.0, 0.5, 3.0))],
                         ids=lambda f: type(f).__name__)
def test_kronecker_flattening(fam, rng):
    x = rng.uniform(-0.5, 0.5, size=3)
    row = regressor_row(fam, x)
    for flat, idx in enumerate(itertools.product(*[range(1, m + 1) for m in fam.ms])):
        expected = np.prod([eval_bf_1d(fam, d, i, x[d]) for d, i in enumerate(idx)])
        assert row[flat] == pytest.approx(expected, abs=1e-14)


def test_polynomial_g_identity(rng):
    m = 9
    fam = Polynomial(m)
    for _ in range(1000):
        i, j = rng.integers(1, m + 1, size=2)
        x = rng.uniform(-1.5, 1.5)
        lhs = fam.eval_1d(0, i, x) * fam.eval_1d(0, j, x)
        assert abs(lhs - g_function(fam, 0, i + j - 1, x)) <= 1e-12


def test_complex_exponential_g_identity(rng):
    m = 12
    fam = ComplexExponential(m)
    for _ in range(1000):
        i, j = rng.integers(1, m + 1, size=2)
        x = rng.uniform(-3, 3)
        lhs = fam.eval_1d(0, i, x) * fam.eval_1d(0, j, x)
        assert abs(lhs - g_function(fam, 0, i + j - 1, x)) <= 1e-12


@pytest.mark.parametrize("L", [0.5, 1.0, 3.0])
def test_hilbert_g_identity(L, rng):
    m = 20
    fam = Hilbert(m, L)
    for _ in range(1000):
        i, j = (int(v) for v in rng.integers(1, m + 1, size=2))
        x = rng.uniform(-L, L)
        lhs = fam.eval_1d(0, i, x) * fam.eval_1d(0, j, x)
        rhs = g_function(fam, 0, i + j, x) - g_function(fam, 0, i - j, x)
        assert abs(lhs - rhs) <= 1e-12


def test_hilbert_g_at_zero_offset():
    assert g_function(Hilbert(3, 1.0), 0, 0, 0.37) == pytest.approx(-0.5)


@pytest.mark.parametrize("block, sign", [("ss", -1), ("cs", -1), ("cc", 1)])
def test_fourier_g_identity(block, sign, rng):
    m, delta = 10, 0.7
    fam = Fourier1D(m, delta)
    for _ in range(1000):
        i, j = (int(v) for v in rng.integers(1, m + 1, size=2))
        x = rng.uniform(-4, 4)
        a = math.cos(i * delta * x) if block in ("cs", "cc") else math.sin(i * delta * x)
        b = math.cos(j * delta * x) if block == "cc" else math.sin(j * delta * x)
        rhs = g_function(fam, 0, i + j, x, block) + sign * g_function(fam, 0, i - j, x, block)
        assert abs(a * b - rhs) <= 1e-12


def test_fourier_sin_sin_example():
    fam = Fourier1D(2, 1.0)
    x = math.pi / 2
    val = g_function(fam, 0, 2, x, "ss") - g_function(fam, 0, 0, x, "ss")
    assert val == pytest.approx(1.0)


def test_polynomial_g_example():
    assert g_function(Polynomial(3), 0, 3, 2.0) == 4.0


@pytest.mark.parametrize("fam, bad", [(Polynomial(3), 0), (Polynomial(3), 6),
                                      (Hilbert(3, 1.0), -3), (Hilbert(3, 1.0), 7)])
def test_g_offset_bounds(fam, bad):
    with pytest.raises(IndexError):
        g_function(fam, 0, bad, 0.1)


def test_fourier_g_offset_bounds():
    with pytest.raises(IndexError):
        g_function(Fourier1D(3, 1.0), 0, 7, 0.1, "cc")


@pytest.mark.parametrize("L", [0.3, 1.0, 7.5])
def test_hilbert_vanishes_on_boundary(L):
    fam = Hilbert(64, L)
    for x in (-L, L):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            vals = fam.features_1d(0, x)
        assert np.max(np.abs(vals)) <= 1e-12


def test_hilbert_outside_domain_warns():
    fam = Hilbert(3, 1.0)
    with pytest.warns(DomainWarning):
        v = fam.eval_1d(0, 1, 1.5)
    assert np.isfinite(v)
    with pytest.warns(DomainWarning):
        mask = fam.check_domain(np.array([[0.0], [2.0]]))
    np.testing.assert_array_equal(mask, [True, False])


def test_complex_exponential_unit_modulus(rng):
    fam = ComplexExponential((8, 5))
    X = rng.uniform(-50, 50, size=(200, 2))
    np.testing.assert_allclose(np.abs(fam.regressor_matrix(X)), 1.0, atol=1e-12)


def test_complex_exponential_definition():
    fam = ComplexExponential(3)
    assert fam.eval_1d(0, 2, 0.25) == pytest.approx(np.exp(1j * math.pi * 2 * 0.25))


@pytest.mark.parametrize(
    "fam, count",
    [(Polynomial((4, 4)), 49), (Hilbert((7, 7), (1.0, 1.0)), 441),
     (ComplexExponential((3,)), 5)],
)
def test_structure_descriptor_counts(fam, count):
    assert unique_entry_count(structure_descriptor(fam)) == count


def test_structure_descriptor_kinds():
    from hankelgp.structured import LevelKind

    assert all(l.kind == LevelKind.HANKEL for l in Polynomial((2, 2)).structure_descriptor().levels)
    hil = Hilbert((2, 3), (1.0, 1.0)).structure_descriptor().levels
    assert all(l.kind == LevelKind.HANKEL_PLUS_TOEPLITZ and l.sign_toeplitz == -1 for l in hil)
    blocks = Fourier1D(5, 0.3).structure_descriptor()
    assert [b.levels[0].sign_toeplitz for b in blocks] == [-1, -1, 1]
    assert all(unique_entry_count(b) == 15 for b in blocks)


def test_fourier_multi_d_rejected():
    with pytest.raises(UnsupportedConfigurationError):
        Fourier1D((3, 3), 1.0)
    with pytest.raises(UnsupportedConfigurationError):
        Fourier1D(3, 1.0).regressor_matrix(np.zeros((2, 2)))


@pytest.mark.parametrize("kwargs", [dict(m=0), dict(m=(2, -1))])
def test_invalid_counts(kwargs):
    with pytest.raises(ValueError):
        Polynomial(**kwargs)


def test_invalid_domain():
    with pytest.raises(ValueError):
        Hilbert(3, 0.0)
    with pytest.raises(ValueError):
        Fourier1D(3, -1.0)


@pytest.mark.parametrize("fam", [Polynomial((2, 3)), ComplexExponential(4),
                                 Hilbert((2, 5), (1.0, 2.5)), Fourier1D(3, 0.25)],
                         ids=lambda f: type(f).__name__)
def test_descriptor_json_round_trip(fam):
    assert family_from_dict(fam.to_dict()) == fam
