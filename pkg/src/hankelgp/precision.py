"""Precision-matrix accumulation: dense reference path and gamma-tensor path.

The gamma path evaluates the per-dimension g-vectors once per point
(``sum_d K_d`` evaluations) and adds their outer tensor product into the
running gamma tensor (``prod_d K_d`` updates, at most ``3**D * M``). Points
are processed in chunks so the outer products become one matrix product per
chunk, which keeps the cost linear in M without a Python-level loop per
point.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

import numpy as np

from .basis import BasisFamily, Fourier1D, FOURIER_BLOCKS
from .exceptions import IncompatibleStructureError, UnsupportedConfigurationError
from .structured import GammaTensor, LevelStructure, materialize, merge

__all__ = [
    "Dataset",
    "OpCounter",
    "FourierGamma",
    "PrecisionSummary",
    "accumulate_naive",
    "accumulate_gamma",
    "accumulate_stats",
    "update_stats",
    "fourier_gamma_1d",
    "reconstruct_precision",
    "merge_summaries",
    "empty_summary",
    "DenseSummary",
    "accumulate_stats_naive",
]

logger = logging.getLogger(__name__)

# upper bound on the number of floats held by one chunk's Khatri-Rao product
_CHUNK_FLOATS = 1 << 21


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValueError(f"X must be 2-D (N, D), got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite values")
        object.__setattr__(self, "X", X)
        if self.y is not None:
            y = np.asarray(self.y, dtype=float).reshape(-1)
            if y.shape[0] != X.shape[0]:
                raise ValueError(f"y has {y.shape[0]} entries but X has {X.shape[0]} rows")
            if not np.all(np.isfinite(y)):
                raise ValueError("y contains non-finite values")
            object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def ndim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], None if self.y is None else self.y[idx])


@dataclass
class OpCounter:
    """Instrumentation for the gamma path."""

    points: int = 0
    g_evaluations: int = 0
    tensor_updates: int = 0

    def record(self, n, sizes):
        self.points += n
        self.g_evaluations += n * int(sum(sizes))
        self.tensor_updates += n * int(np.prod(sizes))


class FourierGamma(NamedTuple):
    """Gamma vectors of the sin-sin, cos-sin and cos-cos blocks."""

    ss: GammaTensor
    cs: GammaTensor
    cc: GammaTensor

    @property
    def n_points(self) -> int:
        return self.ss.n_points

    @property
    def unique_entry_count(self) -> int:
        return sum(g.structure.unique_entry_count for g in self)

    @property
    def complex_valued(self) -> bool:
        return False

    def __add__(self, other):
        return FourierGamma(*(merge(a, b) for a, b in zip(self, other)))


AnyGamma = Union[GammaTensor, FourierGamma]


@dataclass(frozen=True, eq=False)
class PrecisionSummary:
    """O(M) sufficient statistics: gamma, Phi^T y, y^T y and N."""

    gamma: AnyGamma
    phi_t_y: np.ndarray
    y_sq: float
    n: int

    def __post_init__(self):
        phi_t_y = np.array(self.phi_t_y, copy=True)
        phi_t_y.flags.writeable = False
        object.__setattr__(self, "phi_t_y", phi_t_y)
        object.__setattr__(self, "y_sq", float(self.y_sq))
        object.__setattr__(self, "n", int(self.n))
        if self.gamma.n_points != self.n:
            raise ValueError(
                f"gamma holds {self.gamma.n_points} points but summary claims {self.n}"
            )

    @property
    def num_features(self) -> int:
        return self.phi_t_y.shape[0]

    @property
    def storage_floats(self) -> int:
        return _unique_count(self.gamma) + self.num_features + 2


def _unique_count(gamma: AnyGamma) -> int:
    if isinstance(gamma, FourierGamma):
        return gamma.unique_entry_count
    return gamma.structure.unique_entry_count


def _check_data(family: BasisFamily, data: Dataset):
    if isinstance(family, Fourier1D) and data.ndim != 1:
        raise UnsupportedConfigurationError(
            f"Fourier features are only supported for D=1, got D={data.ndim}"
        )
    if data.ndim != family.ndim:
        raise ValueError(f"data has D={data.ndim} but the basis family has D={family.ndim}")


def _dtype(family) -> type:
    return np.complex128 if family.complex_valued else np.float64


_LETTERS = "abcdefghijklmopqrstuvwxyz"


def _outer_sum(factors, weights=None, method="matmul") -> np.ndarray:
    """sum_n w_n * (factors[0][n] outer ... outer factors[-1][n]).

    ``matmul`` folds all but the last factor into a row-wise Kronecker
    product and finishes with one BLAS product. ``einsum`` is a plain
    elementwise contraction with a constant cost per tensor entry; it is the
    like-for-like counterpart of the point-by-point dense accumulation.
    """
    if weights is not None:
        factors = [factors[0] * weights[:, None]] + list(factors[1:])
    if len(factors) == 1:
        return factors[0].sum(axis=0)
    if method == "einsum":
        letters = _LETTERS[: len(factors)]
        spec = ",".join("n" + c for c in letters) + "->" + letters
        return np.einsum(spec, *factors)
    if method != "matmul":
        raise ValueError(f"unknown accumulation method {method!r}")
    kr = factors[0]
    for f in factors[1:-1]:
        kr = (kr[:, :, None] * f[:, None, :]).reshape(kr.shape[0], -1)
    shape = tuple(f.shape[1] for f in factors)
    return (kr.T @ factors[-1]).reshape(shape)


def _chunks(n, floats_per_point, chunk_size=None):
    if chunk_size is None:
        chunk_size = max(1, _CHUNK_FLOATS // max(1, floats_per_point))
    for start in range(0, n, chunk_size):
        yield slice(start, min(n, start + chunk_size))


class _Accumulator:
    """Running sum with optional Kahan compensation across chunks."""

    def __init__(self, shape, dtype, compensated):
        self.total = np.zeros(shape, dtype=dtype)
        self.comp = np.zeros(shape, dtype=dtype) if compensated else None

    def add(self, value):
        if self.comp is None:
            self.total += value
            return
        y = value - self.comp
        t = self.total + y
        self.comp = (t - self.total) - y
        self.total = t


def accumulate_naive(family: BasisFamily, data: Dataset) -> np.ndarray:
    """Phi^T Phi by summing one dense outer product per data point, O(N M^2)."""
    _check_data(family, data)
    M = family.num_features
    out = np.zeros((M, M), dtype=_dtype(family))
    for x in data.X:
        phi = family.regressor_matrix(x[None, :])[0]
        out += np.outer(phi, phi)
    return out


def _gamma_serial(family, X, structure, counter, compensated, chunk_size, block=None,
                  method="matmul"):
    D = structure.ndim
    shape = structure.shape
    acc = _Accumulator(shape, _dtype(family), compensated)
    kr_floats = int(np.prod(shape[:-1])) if D > 1 else shape[0]
    if compensated and chunk_size is None:
        chunk_size = 64
    for sl in _chunks(X.shape[0], kr_floats, chunk_size):
        if block is None:
            gs = [family.g_vectors(d, X[sl, d]) for d in range(D)]
        else:
            gs = [family.g_vectors(0, X[sl, 0], block=block)]
        acc.add(_outer_sum(gs, method=method))
        if counter is not None:
            counter.record(sl.stop - sl.start, shape)
    return acc.total


def _shards(n, threads):
    bounds = np.linspace(0, n, max(1, threads) + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


def _gamma_for_structure(family, X, structure, counter, compensated, threads, chunk_size,
                         block=None, method="matmul"):
    if threads <= 1 or X.shape[0] < 2 * threads:
        data = _gamma_serial(family, X, structure, counter, compensated, chunk_size, block,
                             method)
        return GammaTensor(structure, data, X.shape[0], family.complex_valued)
    shards = _shards(X.shape[0], threads)
    counters = [OpCounter() for _ in shards]

    def work(args):
        sl, c = args
        data = _gamma_serial(family, X[sl], structure, c, compensated, chunk_size, block,
                             method)
        return GammaTensor(structure, data, sl.stop - sl.start, family.complex_valued)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(work, zip(shards, counters)))
    out = parts[0]
    for part in parts[1:]:
        out = merge(out, part)
    if counter is not None:
        for c in counters:
            counter.points += c.points
            counter.g_evaluations += c.g_evaluations
            counter.tensor_updates += c.tensor_updates
    return out


def accumulate_gamma(
    family: BasisFamily,
    data: Dataset,
    *,
    compensated: bool = False,
    threads: int = 1,
    counter: Optional[OpCounter] = None,
    chunk_size: Optional[int] = None,
    method: str = "matmul",
) -> AnyGamma:
    """Unique entries of Phi^T Phi in O(N M) time.

    Returns a :class:`GammaTensor`, or a :class:`FourierGamma` for Fourier
    features. With ``threads > 1`` the data is split into contiguous shards
    whose partial tensors are merged in shard order. ``method`` selects the
    contraction kernel (see :func:`_outer_sum`); both give the same tensor.
    """
    _check_data(family, data)
    if isinstance(family, Fourier1D):
        blocks = family.structure_descriptor()
        return FourierGamma(*(
            _gamma_for_structure(family, data.X, getattr(blocks, b), counter, compensated,
                                 threads, chunk_size, block=b, method=method)
            for b in FOURIER_BLOCKS
        ))
    structure = family.structure_descriptor()
    return _gamma_for_structure(family, data.X, structure, counter, compensated, threads,
                                chunk_size, method=method)


def fourier_gamma_1d(data: Dataset, delta: float, m: int):
    """(gamma_ss, gamma_cs, gamma_cc) as plain offset vectors of length 3m."""
    if data.ndim != 1:
        raise UnsupportedConfigurationError(
            f"Fourier features are only supported for D=1, got D={data.ndim}"
        )
    fg = accumulate_gamma(Fourier1D(m, delta), data)
    return tuple(np.array(g.data) for g in fg)


def _phi_t_y(family, data, compensated, chunk_size=None):
    M = family.num_features
    acc = _Accumulator((M,), _dtype(family), compensated)
    if data.n == 0:
        return acc.total
    if isinstance(family, Fourier1D):
        floats = M
    else:
        floats = M // family.ms[-1] if family.ndim > 1 else M
    if compensated and chunk_size is None:
        chunk_size = 64
    for sl in _chunks(data.n, floats, chunk_size):
        X, y = data.X[sl], data.y[sl]
        if isinstance(family, Fourier1D):
            acc.add(family.features_1d(0, X[:, 0]).T @ y)
        else:
            feats = [family.features_1d(d, X[:, d]) for d in range(family.ndim)]
            acc.add(_outer_sum(feats, weights=y).reshape(-1))
    return acc.total


def accumulate_stats(
    family: BasisFamily,
    data: Dataset,
    *,
    compensated: bool = False,
    threads: int = 1,
    counter: Optional[OpCounter] = None,
) -> PrecisionSummary:
    if data.y is None:
        raise ValueError("accumulate_stats needs observations y")
    gamma = accumulate_gamma(family, data, compensated=compensated, threads=threads,
                             counter=counter)
    phi_t_y = _phi_t_y(family, data, compensated)
    y_sq = float(data.y @ data.y) if data.n else 0.0
    return PrecisionSummary(gamma, phi_t_y, y_sq, data.n)


def empty_summary(family: BasisFamily) -> PrecisionSummary:
    X = np.zeros((0, family.ndim))
    return accumulate_stats(family, Dataset(X, np.zeros(0)))


def update_stats(summary: PrecisionSummary, family: BasisFamily, x, y: float) -> PrecisionSummary:
    """Fold one observation into the summary in O(unique entries + M)."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    y = float(y)
    if not (np.all(np.isfinite(x)) and np.isfinite(y)):
        raise ValueError(f"non-finite observation rejected: x={x.ravel()}, y={y}")
    point = Dataset(x, np.array([y]))
    delta = accumulate_stats(family, point)
    return merge_summaries(summary, delta)


def merge_summaries(a: PrecisionSummary, b: PrecisionSummary) -> PrecisionSummary:
    if type(a.gamma) is not type(b.gamma):
        raise IncompatibleStructureError("cannot merge Fourier and non-Fourier summaries")
    if a.phi_t_y.shape != b.phi_t_y.shape:
        raise IncompatibleStructureError(
            f"feature counts differ: {a.phi_t_y.shape[0]} vs {b.phi_t_y.shape[0]}"
        )
    return PrecisionSummary(a.gamma + b.gamma, a.phi_t_y + b.phi_t_y, a.y_sq + b.y_sq, a.n + b.n)


def _assemble_fourier(fg: FourierGamma) -> np.ndarray:
    ss, cs, cc = (materialize(g) for g in fg)
    return np.block([[ss, cs.T], [cs, cc]])


def reconstruct_precision(obj: Union[PrecisionSummary, AnyGamma]) -> np.ndarray:
    """Dense Phi^T Phi from gamma; O(M^2) time and memory."""
    gamma = obj.gamma if isinstance(obj, PrecisionSummary) else obj
    if isinstance(gamma, FourierGamma):
        return _assemble_fourier(gamma)
    return materialize(gamma)


@dataclass(frozen=True, eq=False)
class DenseSummary:
    """Reference counterpart of :class:`PrecisionSummary` holding the full M x M matrix."""

    precision: np.ndarray
    phi_t_y: np.ndarray
    y_sq: float
    n: int

    @property
    def num_features(self) -> int:
        return self.phi_t_y.shape[0]


def accumulate_stats_naive(family: BasisFamily, data: Dataset) -> DenseSummary:
    """Dense-path statistics: point-by-point Phi^T Phi plus Phi^T y."""
    if data.y is None:
        raise ValueError("accumulate_stats_naive needs observations y")
    P = accumulate_naive(family, data)
    phi_t_y = np.zeros(family.num_features, dtype=_dtype(family))
    for x, y in zip(data.X, data.y):
        phi_t_y += family.regressor_matrix(x[None, :])[0] * y
    return DenseSummary(P, phi_t_y, float(data.y @ data.y) if data.n else 0.0, data.n)
