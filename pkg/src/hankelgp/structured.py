"""Multi-level block Hankel/Toeplitz matrices stored by their unique entries.

A matrix with D levels is described by a :class:`LevelStructure` and all of
its entries live in a dense tensor ``gamma`` with one axis per level. Entry
``(i, j)`` of the full matrix (multi-indices flattened row-major, first
dimension outermost, i.e. Kronecker order) is a signed sum of at most
``2**D`` gamma entries.

Logical offsets per level:

* Hankel: ``k = i + j - 1`` in ``1 .. 2m-1``
* Toeplitz: ``k = m + i - j`` in ``1 .. 2m-1``
* Hankel-plus-Toeplitz: ``k`` in ``1-m .. 2m``, the entry is
  ``gamma[i + j] + sign * gamma[i - j]``

Storage offsets are 0-based; see :meth:`Level.storage_offset`.
"""

from __future__ import annotations

import enum
import itertools
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Sequence

import numpy as np

from .exceptions import FormatError, IncompatibleStructureError

__all__ = [
    "LevelKind",
    "Level",
    "LevelStructure",
    "GammaTensor",
    "hankel_entry_index",
    "toeplitz_entry_index",
    "block_entry",
    "materialize",
    "merge",
    "unique_entry_count",
    "write_gamma",
    "read_gamma",
    "gamma_to_bytes",
    "gamma_from_bytes",
]


class LevelKind(enum.IntEnum):
    HANKEL = 0
    TOEPLITZ = 1
    HANKEL_PLUS_TOEPLITZ = 2


def _check_index(i, m, name):
    if not 1 <= i <= m:
        raise IndexError(f"{name}={i} out of range [1, {m}]")


def hankel_entry_index(i: int, j: int, m: int) -> int:
    """1-based gamma offset of entry (i, j) in an m x m Hankel matrix."""
    _check_index(i, m, "i")
    _check_index(j, m, "j")
    return i + j - 1


def toeplitz_entry_index(i: int, j: int, m: int) -> int:
    """1-based gamma offset of entry (i, j) in an m x m Toeplitz matrix."""
    _check_index(i, m, "i")
    _check_index(j, m, "j")
    return m + i - j


@dataclass(frozen=True)
class Level:
    m: int
    kind: LevelKind
    sign_toeplitz: int = 1

    def __post_init__(self):
        if int(self.m) < 1:
            raise ValueError(f"level size must be >= 1, got {self.m}")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "kind", LevelKind(self.kind))
        if self.sign_toeplitz not in (1, -1):
            raise ValueError("sign_toeplitz must be +1 or -1")
        if self.kind != LevelKind.HANKEL_PLUS_TOEPLITZ and self.sign_toeplitz != 1:
            raise ValueError("sign_toeplitz only applies to Hankel-plus-Toeplitz levels")

    @property
    def size(self) -> int:
        """Number of stored offsets along this level."""
        if self.kind == LevelKind.HANKEL_PLUS_TOEPLITZ:
            return 3 * self.m
        return 2 * self.m - 1

    @property
    def offset_range(self) -> tuple[int, int]:
        """Inclusive logical offset range."""
        if self.kind == LevelKind.HANKEL_PLUS_TOEPLITZ:
            return 1 - self.m, 2 * self.m
        return 1, 2 * self.m - 1

    def storage_offset(self, k):
        lo, hi = self.offset_range
        k_arr = np.asarray(k)
        if np.any((k_arr < lo) | (k_arr > hi)):
            raise IndexError(f"offset {k} outside [{lo}, {hi}]")
        return k - lo

    def terms(self):
        """(sign, m x m storage-index matrix) pairs whose signed sum gives the level."""
        i = np.arange(1, self.m + 1)[:, None]
        j = np.arange(1, self.m + 1)[None, :]
        if self.kind == LevelKind.HANKEL:
            return [(1, i + j - 2)]
        if self.kind == LevelKind.TOEPLITZ:
            return [(1, self.m + i - j - 1)]
        shift = self.m - 1
        return [(1, i + j + shift), (self.sign_toeplitz, i - j + shift)]


@dataclass(frozen=True)
class LevelStructure:
    levels: tuple[Level, ...]

    def __post_init__(self):
        levels = tuple(self.levels)
        if not levels:
            raise ValueError("a structure needs at least one level")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def uniform(cls, ms: Sequence[int], kind: LevelKind, sign_toeplitz: int = 1):
        return cls(tuple(Level(m, kind, sign_toeplitz) for m in ms))

    @property
    def ndim(self) -> int:
        return len(self.levels)

    @property
    def ms(self) -> tuple[int, ...]:
        return tuple(lv.m for lv in self.levels)

    @property
    def num_features(self) -> int:
        return int(np.prod(self.ms))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(lv.size for lv in self.levels)

    @property
    def unique_entry_count(self) -> int:
        return int(np.prod(self.shape))

    def describe(self) -> str:
        parts = []
        for lv in self.levels:
            s = f"m={lv.m}:{lv.kind.name}"
            if lv.kind == LevelKind.HANKEL_PLUS_TOEPLITZ:
                s += f"({lv.sign_toeplitz:+d})"
            parts.append(s)
        return "[" + ", ".join(parts) + "]"


def unique_entry_count(structure: LevelStructure) -> int:
    return structure.unique_entry_count


@dataclass(frozen=True, eq=False)
class GammaTensor:
    """Unique entries of a structured precision matrix plus the point count."""

    structure: LevelStructure
    data: np.ndarray
    n_points: int = 0
    complex_valued: bool = field(default=False)

    def __post_init__(self):
        dtype = np.complex128 if self.complex_valued else np.float64
        data = np.array(self.data, dtype=dtype, copy=True)
        if data.shape != self.structure.shape:
            raise ValueError(
                f"gamma data shape {data.shape} does not match structure shape "
                f"{self.structure.shape}"
            )
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "n_points", int(self.n_points))

    @classmethod
    def zeros(cls, structure: LevelStructure, complex_valued: bool = False):
        return cls(structure, np.zeros(structure.shape), 0, complex_valued)

    @property
    def nbytes(self) -> int:
        return self.data.nbytes

    def __add__(self, other):
        return merge(self, other)


def block_entry(gamma: GammaTensor, i: Sequence[int], j: Sequence[int]):
    """Entry (i, j) of the materialized matrix; i and j are 1-based multi-indices."""
    levels = gamma.structure.levels
    if len(i) != len(levels) or len(j) != len(levels):
        raise IndexError(f"multi-index length must be {len(levels)}")
    per_level = []
    for lv, id_, jd in zip(levels, i, j):
        _check_index(id_, lv.m, "i")
        _check_index(jd, lv.m, "j")
        per_level.append([(s, int(idx[id_ - 1, jd - 1])) for s, idx in lv.terms()])
    total = 0
    for combo in itertools.product(*per_level):
        sign = np.prod([s for s, _ in combo])
        total = total + sign * gamma.data[tuple(k for _, k in combo)]
    return total


def materialize(gamma: GammaTensor) -> np.ndarray:
    """Dense M x M matrix. Costs O(2**D M**2)."""
    structure = gamma.structure
    D = structure.ndim
    M = structure.num_features
    out = np.zeros((M, M), dtype=gamma.data.dtype)
    if M == 0:
        return out
    per_level = []
    for d, lv in enumerate(structure.levels):
        # index arrays broadcast to shape (m_1..m_D, m_1..m_D)
        shape = [1] * (2 * D)
        shape[d] = lv.m
        shape[D + d] = lv.m
        per_level.append([(s, idx.reshape(shape)) for s, idx in lv.terms()])
    for combo in itertools.product(*per_level):
        sign = int(np.prod([s for s, _ in combo]))
        block = gamma.data[tuple(idx for _, idx in combo)]
        block = np.broadcast_to(block, structure.ms + structure.ms).reshape(M, M)
        if sign > 0:
            out += block
        else:
            out -= block
    return out


def merge(a: GammaTensor, b: GammaTensor) -> GammaTensor:
    """Sum of two structurally identical gamma tensors."""
    if a.structure != b.structure:
        raise IncompatibleStructureError(
            f"cannot merge {a.structure.describe()} with {b.structure.describe()}"
        )
    if a.complex_valued != b.complex_valued:
        raise IncompatibleStructureError(
            f"scalar field mismatch: complex={a.complex_valued} vs complex={b.complex_valued}"
        )
    return GammaTensor(a.structure, a.data + b.data, a.n_points + b.n_points, a.complex_valued)


# -- binary format -----------------------------------------------------------

MAGIC = b"GHTP"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHBB")
_LEVEL = struct.Struct("<IBb")
_COUNT = struct.Struct("<Q")


def _header_bytes(gamma: GammaTensor) -> bytes:
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, int(gamma.complex_valued), gamma.structure.ndim)]
    for lv in gamma.structure.levels:
        parts.append(_LEVEL.pack(lv.m, int(lv.kind), lv.sign_toeplitz))
    return b"".join(parts)


def gamma_to_bytes(gamma: GammaTensor) -> bytes:
    payload = np.ascontiguousarray(gamma.data).astype(
        "<c16" if gamma.complex_valued else "<f8"
    )
    return _header_bytes(gamma) + _COUNT.pack(gamma.n_points) + payload.tobytes()


def write_gamma(fh: BinaryIO, gamma: GammaTensor) -> int:
    """Write one gamma record; returns the number of bytes written."""
    buf = gamma_to_bytes(gamma)
    fh.write(buf)
    return len(buf)


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated gamma record while reading {what}")
    return buf


def read_gamma(fh: BinaryIO) -> GammaTensor:
    magic, version, tag, D = _HEADER.unpack(_read_exact(fh, _HEADER.size, "header"))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    if tag not in (0, 1):
        raise FormatError(f"unknown scalar-field tag {tag}")
    if D < 1:
        raise FormatError("gamma record with zero levels")
    levels = []
    for d in range(D):
        m, kind, sign = _LEVEL.unpack(_read_exact(fh, _LEVEL.size, f"level {d + 1}"))
        try:
            levels.append(Level(m, LevelKind(kind), sign))
        except ValueError as exc:
            raise FormatError(f"invalid level {d + 1}: {exc}") from None
    (n_points,) = _COUNT.unpack(_read_exact(fh, _COUNT.size, "n_points"))
    structure = LevelStructure(tuple(levels))
    dtype = np.dtype("<c16" if tag else "<f8")
    count = structure.unique_entry_count
    raw = _read_exact(fh, count * dtype.itemsize, "payload")
    data = np.frombuffer(raw, dtype=dtype).reshape(structure.shape)
    return GammaTensor(structure, data, n_points, bool(tag))


def gamma_from_bytes(buf: bytes) -> GammaTensor:
    import io

    return read_gamma(io.BytesIO(buf))


def header_fields(gamma: GammaTensor) -> list[tuple[str, object]]:
    """Named header fields in file order, excluding n_points."""
    fields = [
        ("version", FORMAT_VERSION),
        ("scalar_field", "complex128" if gamma.complex_valued else "real64"),
        ("D", gamma.structure.ndim),
    ]
    for d, lv in enumerate(gamma.structure.levels, start=1):
        fields += [
            (f"m_{d}", lv.m),
            (f"kind_{d}", lv.kind.name),
            (f"sign_toeplitz_{d}", lv.sign_toeplitz),
        ]
    return fields
