"""Seeded sweep comparing gamma-path and dense-path precision matrices."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .basis import ComplexExponential, Fourier1D, Hilbert, Polynomial
from .exceptions import UnsupportedConfigurationError
from .precision import (
    Dataset,
    OpCounter,
    accumulate_gamma,
    accumulate_naive,
    reconstruct_precision,
)

FAMILIES = ("polynomial", "complex-exponential", "hilbert", "fourier")


@dataclass
class VerifyResult:
    family: str
    D: int
    m: int
    N: int
    max_abs: float
    rel_frobenius: float
    unique_entries: int
    g_evaluations: int
    tensor_updates: int
    tol: float

    @property
    def passed(self) -> bool:
        counted = self.tensor_updates == self.N * self.unique_entries
        return counted and self.rel_frobenius <= self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} family={self.family} D={self.D} m={self.m} N={self.N} "
            f"max_abs={self.max_abs:.3e} rel_fro={self.rel_frobenius:.3e} "
            f"unique={self.unique_entries} g_evals={self.g_evaluations} "
            f"updates={self.tensor_updates}"
        )


def make_family(name: str, D: int, m: int):
    if name == "polynomial":
        return Polynomial((m,) * D)
    if name == "complex-exponential":
        return ComplexExponential((m,) * D)
    if name == "hilbert":
        return Hilbert((m,) * D, (1.0,) * D)
    if name == "fourier":
        if D != 1:
            raise UnsupportedConfigurationError(
                f"Fourier features are only supported for D=1, got D={D}"
            )
        return Fourier1D(m, 0.7)
    raise ValueError(f"unknown family {name!r}")


def random_inputs(rng, name: str, N: int, D: int) -> np.ndarray:
    # keep Hilbert points inside the domain and polynomial powers moderate
    return rng.uniform(-0.95, 0.95, size=(N, D))


def verify_case(name, D, m, N, *, seed=0, tol=1e-9, threads=1, compensated=False) -> VerifyResult:
    family = make_family(name, D, m)
    rng = np.random.default_rng([seed, FAMILIES.index(name), D, m, N])
    data = Dataset(random_inputs(rng, name, N, D))
    counter = OpCounter()
    gamma = accumulate_gamma(family, data, counter=counter, threads=threads,
                             compensated=compensated)
    dense = reconstruct_precision(gamma)
    naive = accumulate_naive(family, data)
    diff = dense - naive
    norm = np.linalg.norm(naive)
    rel = float(np.linalg.norm(diff) / norm) if norm > 0 else float(np.linalg.norm(diff))
    unique = (gamma.unique_entry_count if isinstance(family, Fourier1D)
              else gamma.structure.unique_entry_count)
    return VerifyResult(name, D, m, N, float(np.abs(diff).max(initial=0.0)), rel, unique,
                        counter.g_evaluations, counter.tensor_updates, tol)


def sweep(
    families: Iterable[str] = FAMILIES,
    dims: Sequence[int] = (1, 2, 3),
    ms: Sequence[int] = (1, 2, 4, 8),
    ns: Sequence[int] = (0, 1, 7, 50),
    skip_unsupported: bool = True,
    **kwargs,
):
    for name, D, m, N in itertools.product(families, dims, ms, ns):
        if name == "fourier" and D != 1 and skip_unsupported:
            continue
        yield verify_case(name, D, m, N, **kwargs)
