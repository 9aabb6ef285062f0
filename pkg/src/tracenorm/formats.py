"""On-disk formats: Matrix Market coordinates, dense CSV, JSON Lines traces.

Floats are written with 17 significant digits so every value reads back
bit-identically.
"""

import json
import math
from pathlib import Path

import numpy as np

from .problems import ObservedEntries

MM_HEADER = "%%MatrixMarket matrix coordinate real general"
TRACE_VERSION = 1


class FormatError(ValueError):
    """Malformed input file; the message names the file and line."""


def write_matrix_market(path, entries, comment=None):
    """Write observed entries as 1-based coordinate triplets."""
    n, m = entries.shape
    lines = [MM_HEADER]
    if comment:
        lines.extend("%" + c for c in str(comment).splitlines())
    lines.append(f"{n} {m} {len(entries)}")
    for i, j, v in zip(entries.rows + 1, entries.cols + 1, entries.values):
        lines.append(f"{i} {j} {v:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_market(path):
    """Read a ``coordinate real general`` Matrix Market file.

    Raises
    ------
    FormatError
        On a wrong header, a malformed line, an out-of-range index, a
        duplicate entry or a count mismatch, with the offending line number.
    """
    path = Path(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip().lower() != MM_HEADER.lower():
        raise FormatError(f"{path}:1: expected header '{MM_HEADER}'")
    k = 1
    while k < len(lines) and (lines[k].startswith("%") or not lines[k].strip()):
        k += 1
    if k == len(lines):
        raise FormatError(f"{path}: missing size line")
    try:
        n, m, nnz = (int(t) for t in lines[k].split())
    except ValueError:
        raise FormatError(f"{path}:{k + 1}: size line must hold three integers") from None
    if n < 1 or m < 1 or nnz < 0:
        raise FormatError(f"{path}:{k + 1}: invalid sizes")
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    seen = {}
    t = 0
    for lineno, line in enumerate(lines[k + 1:], start=k + 2):
        if not line.strip() or line.startswith("%"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 'row col value'")
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: cannot parse '{line.strip()}'") from None
        if not (1 <= i <= n and 1 <= j <= m):
            raise FormatError(f"{path}:{lineno}: index ({i}, {j}) outside {n} x {m}")
        if not math.isfinite(v):
            raise FormatError(f"{path}:{lineno}: non-finite value")
        if (i, j) in seen:
            raise FormatError(f"{path}:{lineno}: duplicate entry ({i}, {j}), first on line {seen[i, j]}")
        if t >= nnz:
            raise FormatError(f"{path}:{lineno}: more entries than the declared {nnz}")
        seen[i, j] = lineno
        rows[t], cols[t], vals[t] = i - 1, j - 1, v
        t += 1
    if t != nnz:
        raise FormatError(f"{path}: declared {nnz} entries but found {t}")
    return ObservedEntries(rows, cols, vals, (n, m))


def _shape_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_dense(path, A):
    """Headerless CSV plus a ``<name>.json`` sidecar holding the shape."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    path = Path(path)
    with open(path, "w") as fh:
        for row in A:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    _shape_path(path).write_text(json.dumps({"rows": A.shape[0], "cols": A.shape[1], "dtype": "float64"}) + "\n")


def read_dense(path):
    path = Path(path)
    side = _shape_path(path)
    if not side.exists():
        raise FormatError(f"{path}: missing shape descriptor {side.name}")
    try:
        meta = json.loads(side.read_text())
        shape = (int(meta["rows"]), int(meta["cols"]))
    except (ValueError, KeyError, TypeError):
        raise FormatError(f"{side}: expected {{'rows': int, 'cols': int}}") from None
    out = np.empty(shape)
    r = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            if r >= shape[0]:
                raise FormatError(f"{path}:{lineno}: more rows than the declared {shape[0]}")
            try:
                vals = [float(t) for t in line.split(",")]
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric field") from None
            if len(vals) != shape[1]:
                raise FormatError(f"{path}:{lineno}: {len(vals)} columns, expected {shape[1]}")
            out[r] = vals
            r += 1
    if r != shape[0]:
        raise FormatError(f"{path}: found {r} rows, expected {shape[0]}")
    return out


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


class TraceWriter:
    """Callable sink appending one JSON object per event to a file."""

    def __init__(self, path, **static):
        self.path = Path(path)
        self.static = static
        self._fh = open(self.path, "w")

    def __call__(self, event):
        rec = {"v": TRACE_VERSION, **self.static, **event}
        self._fh.write(json.dumps(rec, default=_jsonable, allow_nan=True) + "\n")

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_trace(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise FormatError(f"{path}:{err.lineno}: {err.msg}") from None
