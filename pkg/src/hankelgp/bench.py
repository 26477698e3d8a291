"""Timing and storage comparison of the dense and gamma accumulation paths."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .basis import Hilbert
from .precision import Dataset, accumulate_gamma, accumulate_naive

logger = logging.getLogger(__name__)

BYTES_PER_FLOAT = 8


@dataclass
class BenchRow:
    ms: tuple
    M: int
    t_naive: Optional[float]
    t_gamma: Optional[float]
    t_gamma_matmul: Optional[float]
    bytes_dense: int
    bytes_gamma: int
    error: str = ""


def storage_bytes(family) -> tuple[int, int]:
    """(dense, gamma) storage in bytes for 64-bit floats."""
    structure = family.structure_descriptor()
    M = family.num_features
    return BYTES_PER_FLOAT * M * M, BYTES_PER_FLOAT * structure.unique_entry_count


def _median_time(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def run_benchmark(
    grid: Sequence[Sequence[int]],
    *,
    n: int = 500,
    reps: int = 3,
    naive_cap: int = 3375,
    seed: int = 0,
    threads: int = 1,
    time_gamma: bool = True,
    kernel: str = "einsum",
) -> list[BenchRow]:
    """Time both paths for Hilbert bases with per-dimension counts from ``grid``.

    ``t_gamma`` uses the elementwise contraction (``kernel="einsum"``), which
    like the dense path pays a fixed cost per stored entry; ``t_gamma_matmul``
    is the BLAS-backed default used elsewhere in the library. Only the
    accumulation call is timed.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for ms in grid:
        ms = tuple(int(m) for m in ms)
        family = Hilbert(ms, (1.0,) * len(ms))
        data = Dataset(rng.uniform(-0.9, 0.9, size=(n, len(ms))))
        M = family.num_features
        bytes_dense, bytes_gamma = storage_bytes(family)
        row = BenchRow(ms, M, None, None, None, bytes_dense, bytes_gamma)
        try:
            if time_gamma:
                row.t_gamma = _median_time(
                    lambda: accumulate_gamma(family, data, method=kernel, threads=threads), reps)
                row.t_gamma_matmul = _median_time(
                    lambda: accumulate_gamma(family, data, method="matmul", threads=threads), reps)
            if time_gamma and M <= naive_cap:
                row.t_naive = _median_time(lambda: accumulate_naive(family, data), reps)
        except MemoryError as exc:
            row.error = f"out of memory: {exc}"
        logger.info("M=%d t_naive=%s t_gamma=%s", M, row.t_naive, row.t_gamma)
        rows.append(row)
    return rows


def loglog_slope(M, t) -> float:
    """Least-squares slope of log t against log M over finite entries."""
    M = np.asarray(M, dtype=float)
    t = np.asarray([np.nan if v is None else v for v in t], dtype=float)
    ok = np.isfinite(t) & (t > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(M[ok]), np.log(t[ok]), 1)[0])


CSV_COLUMNS = ["M", "m", "t_naive", "t_gamma", "t_gamma_matmul", "bytes_dense", "bytes_gamma",
               "error"]


def rows_to_records(rows):
    def fmt(v):
        return "" if v is None else f"{v:.6e}"

    for r in rows:
        yield [r.M, "x".join(map(str, r.ms)), fmt(r.t_naive), fmt(r.t_gamma),
               fmt(r.t_gamma_matmul), r.bytes_dense, r.bytes_gamma, r.error]
