"""Basis-function families whose per-point outer products are Hankel/Toeplitz.

Each family exposes its 1-D features, the Kronecker regressor row, and the
per-dimension ``g`` function such that the products of two features reduce
to ``g`` evaluated at a single offset:

* polynomial, complex exponential: ``phi_i * phi_j = g(i + j - 1)``
* Hilbert (and each Fourier block): ``phi_i * phi_j = g(i + j) + s * g(i - j)``

All public indices are 1-based.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

from .exceptions import DomainWarning, UnsupportedConfigurationError
from .structured import Level, LevelKind, LevelStructure

__all__ = [
    "Polynomial",
    "ComplexExponential",
    "Hilbert",
    "Fourier1D",
    "FourierBlocks",
    "BasisFamily",
    "eval_bf_1d",
    "regressor_row",
    "regressor_matrix",
    "g_function",
    "structure_descriptor",
    "family_from_dict",
    "FOURIER_BLOCKS",
]

FOURIER_BLOCKS = ("ss", "cs", "cc")


def _as_ms(m) -> tuple[int, ...]:
    ms = (int(m),) if np.isscalar(m) else tuple(int(v) for v in m)
    if not ms or any(v < 1 for v in ms):
        raise ValueError(f"basis counts must be >= 1, got {m}")
    return ms


def _khatri_rao(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Row-wise Kronecker product of (N, k_d) arrays, first factor outermost."""
    out = factors[0]
    for f in factors[1:]:
        out = (out[:, :, None] * f[:, None, :]).reshape(out.shape[0], -1)
    return out


class _TensorFamily:
    """Shared machinery for the Kronecker-product families."""

    ms: tuple[int, ...]
    complex_valued = False

    @property
    def ndim(self) -> int:
        return len(self.ms)

    @property
    def num_features(self) -> int:
        return int(np.prod(self.ms))

    def _check_dim(self, d):
        if not 0 <= d < self.ndim:
            raise IndexError(f"dimension {d} out of range for D={self.ndim}")

    def features_1d(self, d: int, x) -> np.ndarray:
        """(N, m_d) array of the dimension-d features at coordinates x."""
        self._check_dim(d)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        i = np.arange(1, self.ms[d] + 1)
        return self._phi(d, i[None, :], x[:, None])

    def eval_1d(self, d: int, i: int, x):
        self._check_dim(d)
        if not 1 <= i <= self.ms[d]:
            raise IndexError(f"basis index {i} out of range [1, {self.ms[d]}]")
        return self._phi(d, i, np.asarray(x, dtype=float))

    def regressor_matrix(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1 and self.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[1] != self.ndim:
            raise ValueError(f"expected inputs of shape (N, {self.ndim}), got {X.shape}")
        return _khatri_rao([self.features_1d(d, X[:, d]) for d in range(self.ndim)])

    def g_vectors(self, d: int, x) -> np.ndarray:
        """g over the full stored offset range of dimension d, shape (N, K_d)."""
        self._check_dim(d)
        lv = self.structure_descriptor().levels[d]
        lo, hi = lv.offset_range
        k = np.arange(lo, hi + 1)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self._g(d, k[None, :], x[:, None])

    def g(self, d: int, k, x):
        self._check_dim(d)
        lv = self.structure_descriptor().levels[d]
        lv.storage_offset(k)
        return self._g(d, np.asarray(k), np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Polynomial(_TensorFamily):
    """Monomials x**(i-1) along each dimension."""

    m: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "m", _as_ms(self.m))

    @property
    def ms(self):
        return self.m

    def _phi(self, d, i, x):
        return np.power(x, i - 1)

    def _g(self, d, k, x):
        return np.power(x, k - 1)

    def structure_descriptor(self) -> LevelStructure:
        return LevelStructure.uniform(self.m, LevelKind.HANKEL)

    def to_dict(self):
        return {"family": "polynomial", "m": list(self.m)}


@dataclass(frozen=True)
class ComplexExponential(_TensorFamily):
    """exp(i*pi*j*x) for j = 1..m_d along each dimension."""

    m: tuple[int, ...]
    complex_valued = True

    def __post_init__(self):
        object.__setattr__(self, "m", _as_ms(self.m))

    @property
    def ms(self):
        return self.m

    def _phi(self, d, i, x):
        return np.exp(1j * np.pi * i * x)

    def _g(self, d, k, x):
        # offset k = i + j - 1 carries frequency i + j
        return np.exp(1j * np.pi * (k + 1) * x)

    def structure_descriptor(self) -> LevelStructure:
        return LevelStructure.uniform(self.m, LevelKind.HANKEL)

    def to_dict(self):
        return {"family": "complex-exponential", "m": list(self.m)}


@dataclass(frozen=True)
class Hilbert(_TensorFamily):
    """Laplacian eigenfunctions with Dirichlet boundaries on [-L_d, L_d]."""

    m: tuple[int, ...]
    L: tuple[float, ...]

    def __post_init__(self):
        ms = _as_ms(self.m)
        Ls = (float(self.L),) * len(ms) if np.isscalar(self.L) else tuple(float(v) for v in self.L)
        if len(Ls) != len(ms):
            raise ValueError(f"need one half-width per dimension, got m={ms}, L={Ls}")
        if any(not np.isfinite(v) or v <= 0 for v in Ls):
            raise ValueError(f"domain half-widths must be positive, got {Ls}")
        object.__setattr__(self, "m", ms)
        object.__setattr__(self, "L", Ls)

    @property
    def ms(self):
        return self.m

    def sqrt_eigenvalues(self, d: int) -> np.ndarray:
        return np.pi * np.arange(1, self.m[d] + 1) / (2.0 * self.L[d])

    def check_domain(self, X, stacklevel=3) -> np.ndarray:
        """Boolean mask of rows inside the domain; warns if any are outside."""
        X = np.asarray(X, dtype=float).reshape(-1, self.ndim)
        inside = np.all(np.abs(X) <= np.asarray(self.L), axis=1)
        if not inside.all():
            warnings.warn(
                f"{int((~inside).sum())} point(s) outside the Hilbert domain "
                f"+/-{self.L}; the approximation is not valid there",
                DomainWarning,
                stacklevel=stacklevel,
            )
        return inside

    def _phi(self, d, i, x):
        L = self.L[d]
        if np.any(np.abs(x) > L):
            warnings.warn(
                f"coordinate outside [-{L}, {L}] in dimension {d + 1}",
                DomainWarning,
                stacklevel=4,
            )
        return np.sin(np.pi * i * (x + L) / (2 * L)) / np.sqrt(L)

    def _g(self, d, k, x):
        L = self.L[d]
        return np.sin(np.pi * k * (x + L) / (2 * L) - np.pi / 2) / (2 * L)

    def structure_descriptor(self) -> LevelStructure:
        return LevelStructure.uniform(self.m, LevelKind.HANKEL_PLUS_TOEPLITZ, -1)

    def to_dict(self):
        return {"family": "hilbert", "m": list(self.m), "L": list(self.L)}


class FourierBlocks(NamedTuple):
    ss: LevelStructure
    cs: LevelStructure
    cc: LevelStructure


@dataclass(frozen=True)
class Fourier1D:
    """[sin(k*delta*x) for k=1..m] followed by [cos(k*delta*x) for k=1..m]."""

    m: int
    delta: float
    complex_valued = False

    def __post_init__(self):
        if np.ndim(self.m) != 0:
            ms = _as_ms(self.m)
            if len(ms) != 1:
                raise UnsupportedConfigurationError(
                    "Fourier features are only supported for D=1"
                )
            object.__setattr__(self, "m", ms[0])
        if int(self.m) < 1:
            raise ValueError("m must be >= 1")
        if not self.delta > 0:
            raise ValueError("frequency spacing must be positive")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "delta", float(self.delta))

    ndim = 1

    @property
    def ms(self):
        return (self.m,)

    @property
    def num_features(self) -> int:
        return 2 * self.m

    def features_1d(self, d, x) -> np.ndarray:
        if d != 0:
            raise IndexError("Fourier1D has a single dimension")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        w = self.delta * np.arange(1, self.m + 1)
        arg = x[:, None] * w[None, :]
        return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)

    def eval_1d(self, d, i, x):
        """Feature i in 1..2m: sines first, then cosines."""
        if not 1 <= i <= 2 * self.m:
            raise IndexError(f"basis index {i} out of range [1, {2 * self.m}]")
        x = np.asarray(x, dtype=float)
        if i <= self.m:
            return np.sin(i * self.delta * x)
        return np.cos((i - self.m) * self.delta * x)

    def regressor_matrix(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            if X.shape[1] != 1:
                raise UnsupportedConfigurationError(
                    f"Fourier features are only supported for D=1, got D={X.shape[1]}"
                )
            X = X[:, 0]
        return self.features_1d(0, X)

    def _g(self, block, k, x):
        arg = k * self.delta * x
        if block == "ss":
            return -0.5 * np.cos(arg)
        if block == "cs":
            return 0.5 * np.sin(arg)
        if block == "cc":
            return 0.5 * np.cos(arg)
        raise ValueError(f"unknown Fourier block {block!r}")

    def g(self, d, k, x, block="ss"):
        getattr(self.structure_descriptor(), block).levels[0].storage_offset(k)
        return self._g(block, np.asarray(k), np.asarray(x, dtype=float))

    def g_vectors(self, d, x, block="ss") -> np.ndarray:
        k = np.arange(1 - self.m, 2 * self.m + 1)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self._g(block, k[None, :], x[:, None])

    def structure_descriptor(self) -> FourierBlocks:
        def lv(sign):
            return LevelStructure((Level(self.m, LevelKind.HANKEL_PLUS_TOEPLITZ, sign),))

        return FourierBlocks(ss=lv(-1), cs=lv(-1), cc=lv(1))

    def to_dict(self):
        return {"family": "fourier", "m": [self.m], "delta": self.delta}


BasisFamily = Union[Polynomial, ComplexExponential, Hilbert, Fourier1D]


def eval_bf_1d(family: BasisFamily, d: int, i: int, x):
    return family.eval_1d(d, i, x)


def regressor_row(family: BasisFamily, x) -> np.ndarray:
    """phi(x) for a single D-vector x."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != family.ndim:
        raise ValueError(f"expected a {family.ndim}-vector, got shape {x.shape}")
    return family.regressor_matrix(x[None, :])[0]


def regressor_matrix(family: BasisFamily, X) -> np.ndarray:
    return family.regressor_matrix(X)


def g_function(family: BasisFamily, d: int, k, x, block=None):
    if isinstance(family, Fourier1D):
        return family.g(d, k, x, block=block or "ss")
    if block is not None:
        raise ValueError("block only applies to Fourier features")
    return family.g(d, k, x)


def structure_descriptor(family: BasisFamily):
    return family.structure_descriptor()


def family_from_dict(desc: dict) -> BasisFamily:
    """Inverse of ``family.to_dict()``."""
    name = desc.get("family")
    if "m" not in desc:
        raise ValueError("family descriptor needs 'm'")
    if name == "polynomial":
        return Polynomial(desc["m"])
    if name == "complex-exponential":
        return ComplexExponential(desc["m"])
    if name == "hilbert":
        if "L" not in desc:
            raise ValueError("hilbert family descriptor needs 'L'")
        return Hilbert(desc["m"], desc["L"])
    if name == "fourier":
        return Fourier1D(desc["m"], desc.get("delta", 1.0))
    raise ValueError(f"unknown basis family {name!r}")
