"""Plain-text file formats: dense matrices, vectors, sparse triplets, JSON."""

from __future__ import annotations

import json
import math
import re
from pathlib import Path

import numpy as np

from .core import DEFAULT_ZERO_TOL, as_array

_HEADER = re.compile(r"^#\s*rows=(\d+)\s+cols=(\d+)\s*$")
_FMT = "%.17g"


class FileFormatError(OSError):
    """A file exists but cannot be parsed in the expected format."""


def _fmt(x) -> str:
    return _FMT % x


def write_matrix_csv(path, M) -> None:
    """Dense matrix with a ``# rows=m cols=n`` header and 17 significant digits."""
    M = np.atleast_2d(as_array(M))
    m, n = M.shape
    lines = [f"# rows={m} cols={n}"]
    lines += [",".join(_fmt(x) for x in row) for row in M]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    text = Path(path).read_text().splitlines()
    shape = None
    rows = []
    for ln, line in enumerate(text, 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            hit = _HEADER.match(line)
            if hit and shape is None:
                shape = (int(hit.group(1)), int(hit.group(2)))
            continue
        try:
            rows.append([float(x) for x in line.split(",")])
        except ValueError as exc:
            raise FileFormatError(f"{path}:{ln}: {exc}") from None
    if not rows:
        raise FileFormatError(f"{path}: no data rows")
    if len({len(r) for r in rows}) != 1:
        raise FileFormatError(f"{path}: ragged rows")
    M = np.array(rows, dtype=float)
    if shape is not None and M.shape != shape:
        raise FileFormatError(f"{path}: header says {shape}, data is {M.shape}")
    return M


def write_vector_csv(path, v) -> None:
    v = np.asarray(v, dtype=float).ravel()
    Path(path).write_text(f"# rows={v.size} cols=1\n" + "".join(_fmt(x) + "\n" for x in v))


def read_vector_csv(path) -> np.ndarray:
    M = read_matrix_csv(path)
    if M.shape[1] != 1 and M.shape[0] != 1:
        raise FileFormatError(f"{path}: expected a single column, got shape {M.shape}")
    return M.ravel()


def write_index_csv(path, idx) -> None:
    idx = [int(i) for i in idx]
    Path(path).write_text(f"# rows={len(idx)} cols=1\n" + "".join(f"{i}\n" for i in idx))


def read_index_csv(path) -> list:
    text = Path(path).read_text().splitlines()
    out = []
    for ln, line in enumerate(text, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            out.append(int(line))
        except ValueError:
            raise FileFormatError(f"{path}:{ln}: not an integer: {line!r}") from None
    return out


def write_triplets_csv(path, T, zero_tol: float = DEFAULT_ZERO_TOL) -> None:
    """Entries above ``zero_tol`` as ``i,j,value`` rows in row-major order."""
    T = as_array(T)
    lines = ["i,j,value"]
    for i, j in zip(*np.nonzero(T > zero_tol)):
        lines.append(f"{i},{j},{_fmt(T[i, j])}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_triplets_csv(path, shape) -> np.ndarray:
    T = np.zeros(shape)
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("i,"):
            continue
        try:
            i, j, v = line.split(",")
            T[int(i), int(j)] = float(v)
        except (ValueError, IndexError) as exc:
            raise FileFormatError(f"{path}:{ln}: {exc}") from None
    return T


def read_pairs_csv(path) -> set:
    """Truth pairs ``i,j`` one per line; a header line is allowed."""
    pairs = set()
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#") or line[0].isalpha():
            continue
        try:
            i, j = line.split(",")[:2]
            pairs.add((int(i), int(j)))
        except ValueError:
            raise FileFormatError(f"{path}:{ln}: expected 'i,j'") from None
    return pairs


def _clean(obj):
    # JSON has no NaN or infinity; write them as null
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_json(obj))


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: {exc}") from None
