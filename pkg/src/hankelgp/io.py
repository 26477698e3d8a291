"""File formats: CSV datasets, summary binaries and model JSON.

A summary file is one ``GHTP`` gamma record (three for Fourier features, in
ss, cs, cc order) followed by a ``PTYS`` sidecar record::

    magic "PTYS" | version u16 | scalar tag u8 | reserved u8 |
    M u64 | n u64 | y_sq f64 | phi_t_y (M little-endian f64, complex interleaved)

A bare ``.gamma`` file is the same thing without the sidecar.
"""

from __future__ import annotations

import csv
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .basis import family_from_dict
from .exceptions import FormatError, IncompatibleStructureError
from .precision import Dataset, FourierGamma, PrecisionSummary
from .structured import MAGIC, GammaTensor, header_fields, merge, read_gamma, write_gamma

__all__ = [
    "read_dataset",
    "write_dataset",
    "write_summary",
    "read_summary",
    "SummaryFile",
    "merge_summary_files",
    "write_model",
    "read_model",
    "grid_split",
]

SIDECAR_MAGIC = b"PTYS"
SIDECAR_VERSION = 1
_SIDECAR = struct.Struct("<4sHBBQQd")


def read_dataset(path, ndim: Optional[int] = None, require_y: bool = False) -> Dataset:
    """Read a CSV with a header row: x_1..x_D then an optional ``y`` column."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"{path}: cannot open ({exc.strerror})") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: missing header row") from None
        has_y = bool(header) and header[-1].lower() == "y"
        n_x = len(header) - int(has_y)
        if n_x < 1:
            raise FormatError(f"{path}:1: header has no input columns")
        if ndim is not None and n_x != ndim:
            raise FormatError(f"{path}:1: expected {ndim} input column(s), header has {n_x}")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FormatError(
                    f"{path}:{line}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                values = [float(c) for c in row]
            except ValueError as exc:
                raise FormatError(f"{path}:{line}: {exc}") from None
            if not all(np.isfinite(values)):
                raise FormatError(f"{path}:{line}: non-finite value")
            rows.append(values)
    if require_y and not has_y:
        raise FormatError(f"{path}:1: a 'y' column is required")
    arr = np.array(rows, dtype=float).reshape(-1, len(header))
    return Dataset(arr[:, :n_x], arr[:, n_x] if has_y else None)


def write_dataset(path, data: Dataset):
    header = [f"x_{d + 1}" for d in range(data.ndim)]
    cols = [data.X]
    if data.y is not None:
        header.append("y")
        cols.append(data.y[:, None])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in np.hstack(cols) if data.n else []:
            writer.writerow([repr(float(v)) for v in row])


@dataclass
class SummaryFile:
    gammas: list
    phi_t_y: Optional[np.ndarray] = None
    y_sq: float = 0.0
    n: Optional[int] = None

    @property
    def has_sidecar(self) -> bool:
        return self.phi_t_y is not None

    def to_summary(self) -> PrecisionSummary:
        if not self.has_sidecar:
            raise FormatError("file holds only gamma records, no Phi^T y sidecar")
        gamma = self.gammas[0] if len(self.gammas) == 1 else FourierGamma(*self.gammas)
        return PrecisionSummary(gamma, self.phi_t_y, self.y_sq, self.n)


def _gammas_of(obj) -> list:
    if isinstance(obj, PrecisionSummary):
        obj = obj.gamma
    if isinstance(obj, FourierGamma):
        return list(obj)
    return [obj]


def write_summary(path, summary, *, with_sidecar: bool = True) -> int:
    """Write a summary (or bare gamma) file; returns the byte count."""
    total = 0
    with open(path, "wb") as fh:
        for g in _gammas_of(summary):
            total += write_gamma(fh, g)
        if with_sidecar and isinstance(summary, PrecisionSummary):
            complex_valued = np.iscomplexobj(summary.phi_t_y)
            fh.write(_SIDECAR.pack(SIDECAR_MAGIC, SIDECAR_VERSION, int(complex_valued), 0,
                                   summary.num_features, summary.n, summary.y_sq))
            payload = np.asarray(summary.phi_t_y).astype("<c16" if complex_valued else "<f8")
            fh.write(payload.tobytes())
            total += _SIDECAR.size + payload.nbytes
    return total


def read_summary(path) -> SummaryFile:
    path = Path(path)
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise FormatError(f"{path}: cannot open ({exc.strerror})") from None
    with fh:
        gammas = []
        out = None
        while True:
            peek = fh.read(4)
            if not peek:
                break
            fh.seek(-len(peek), os.SEEK_CUR)
            if peek == MAGIC:
                try:
                    gammas.append(read_gamma(fh))
                except FormatError as exc:
                    raise FormatError(f"{path}: {exc}") from None
            elif peek == SIDECAR_MAGIC:
                raw = fh.read(_SIDECAR.size)
                if len(raw) != _SIDECAR.size:
                    raise FormatError(f"{path}: truncated sidecar header")
                _, version, tag, _, M, n, y_sq = _SIDECAR.unpack(raw)
                if version != SIDECAR_VERSION:
                    raise FormatError(f"{path}: unsupported sidecar version {version}")
                dtype = np.dtype("<c16" if tag else "<f8")
                buf = fh.read(M * dtype.itemsize)
                if len(buf) != M * dtype.itemsize:
                    raise FormatError(f"{path}: truncated sidecar payload")
                out = (np.frombuffer(buf, dtype=dtype).copy(), y_sq, n)
                if fh.read(1):
                    raise FormatError(f"{path}: trailing bytes after sidecar")
                break
            else:
                raise FormatError(f"{path}: unknown record magic {peek!r}")
    if len(gammas) not in (1, 3):
        raise FormatError(f"{path}: expected 1 or 3 gamma records, found {len(gammas)}")
    if out is None:
        return SummaryFile(gammas, n=gammas[0].n_points)
    phi_t_y, y_sq, n = out
    if any(g.n_points != n for g in gammas):
        raise FormatError(f"{path}: gamma point counts disagree with the sidecar")
    return SummaryFile(gammas, phi_t_y, y_sq, n)


def _first_divergence(a: SummaryFile, b: SummaryFile) -> Optional[str]:
    if len(a.gammas) != len(b.gammas):
        return f"gamma record count ({len(a.gammas)} vs {len(b.gammas)})"
    for r, (ga, gb) in enumerate(zip(a.gammas, b.gammas), start=1):
        fa, fb = header_fields(ga), header_fields(gb)
        for (name, va), (_, vb) in zip(fa, fb):
            if va != vb:
                return f"record {r} field {name} ({va} vs {vb})"
        if len(fa) != len(fb):
            return f"record {r} level count ({ga.structure.ndim} vs {gb.structure.ndim})"
    if a.has_sidecar != b.has_sidecar:
        return "sidecar presence"
    if a.has_sidecar:
        if a.phi_t_y.shape != b.phi_t_y.shape:
            return f"sidecar M ({a.phi_t_y.shape[0]} vs {b.phi_t_y.shape[0]})"
        if a.phi_t_y.dtype != b.phi_t_y.dtype:
            return "sidecar scalar field"
    return None


def merge_summary_files(files: Sequence[SummaryFile]) -> SummaryFile:
    if not files:
        raise ValueError("nothing to merge")
    out = files[0]
    for other in files[1:]:
        diverge = _first_divergence(out, other)
        if diverge is not None:
            raise IncompatibleStructureError(f"header mismatch at {diverge}")
        gammas = [merge(ga, gb) for ga, gb in zip(out.gammas, other.gammas)]
        if out.has_sidecar:
            out = SummaryFile(gammas, out.phi_t_y + other.phi_t_y, out.y_sq + other.y_sq,
                              out.n + other.n)
        else:
            out = SummaryFile(gammas, n=gammas[0].n_points)
    return out


def write_summary_file(path, sf: SummaryFile) -> int:
    if sf.has_sidecar:
        return write_summary(path, sf.to_summary())
    gamma = sf.gammas[0] if len(sf.gammas) == 1 else FourierGamma(*sf.gammas)
    return write_summary(path, gamma, with_sidecar=False)


MODEL_FORMAT = "hankelgp-model"


def write_model(path, *, family, hyperparams, summary_path, center, n, extra=None):
    path = Path(path)
    try:
        rel = os.path.relpath(summary_path, path.parent)
    except ValueError:
        rel = str(summary_path)
    doc = {
        "format": MODEL_FORMAT,
        "version": 1,
        "family": family.to_dict(),
        "hyperparameters": hyperparams.to_dict(),
        "domain": {"center": [float(c) for c in center],
                   "half_width": list(getattr(family, "L", []))},
        "summary": rel,
        "n": int(n),
    }
    if extra:
        doc.update(extra)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return doc


def read_model(path):
    """Returns (doc, family, Hyperparams, summary path)."""
    from .gp import Hyperparams

    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise FormatError(f"{path}: cannot open ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if doc.get("format") != MODEL_FORMAT:
        raise FormatError(f"{path}: not a {MODEL_FORMAT} file")
    try:
        family = family_from_dict(doc["family"])
        hp = Hyperparams(**doc["hyperparameters"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad model contents ({exc})") from None
    summary_path = (path.parent / doc["summary"]).resolve()
    return doc, family, hp, summary_path


def grid_split(X, width: float, height: Optional[float] = None):
    """Checkerboard train/test mask: cells of size width x height, even cells train."""
    X = np.asarray(X, dtype=float)
    cell = np.floor(X[:, 0] / width).astype(np.int64)
    if X.shape[1] > 1:
        cell = cell + np.floor(X[:, 1] / (height if height is not None else width)).astype(np.int64)
    return cell % 2 == 0
