"""File formats: Matrix Market coordinate matrices, plain vectors, JSON reports.

The Matrix Market writer keeps every stored entry (explicit zeros included)
and always declares ``real general`` so files round-trip bit-for-bit through
``%.17g``.
"""
from __future__ import annotations

import json
import math
import os
from pathlib import Path

import numpy as np
import scipy.sparse as sp

SCHEMA_VERSION = 1


class FormatError(ValueError):
    pass


def write_matrix_market(path, A, comment: str = "") -> None:
    A = sp.coo_matrix(A)
    # row-major order so the file is independent of the input layout
    order = np.lexsort((A.col, A.row))
    rows, cols, vals = A.row[order], A.col[order], A.data[order]
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        for line in comment.splitlines():
            fh.write(f"% {line}\n")
        fh.write(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(rows, cols, vals):
            fh.write(f"{i + 1} {j + 1} {float(v):.17g}\n")


def read_matrix_market(path) -> sp.csr_matrix:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) < 5 or header[0] != "%%MatrixMarket":
            raise FormatError(f"{path}: not a Matrix Market file")
        obj, fmt, field, symm = (h.lower() for h in header[1:5])
        if obj != "matrix" or fmt != "coordinate" or field not in ("real", "integer") or symm != "general":
            raise FormatError(f"{path}: unsupported header {' '.join(header)}")
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        nr, nc, nnz = (int(t) for t in line.split())
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    if data.shape[0] != nnz:
        raise FormatError(f"{path}: expected {nnz} entries, found {data.shape[0]}")
    rows = data[:, 0].astype(np.int64) - 1
    cols = data[:, 1].astype(np.int64) - 1
    A = sp.csr_matrix((data[:, 2], (rows, cols)), shape=(nr, nc))
    A.sort_indices()
    return A


def write_vector(path, v) -> None:
    v = np.asarray(v, dtype=float).ravel()
    with open(path, "w") as fh:
        fh.write(f"{v.size}\n")
        for x in v:
            fh.write(f"{x:.17g}\n")


def read_vector(path) -> np.ndarray:
    with open(path) as fh:
        n = int(fh.readline())
        v = np.array([float(fh.readline()) for _ in range(n)])
    return v


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload: dict) -> None:
    body = {"schema_version": SCHEMA_VERSION}
    body.update(payload)
    with open(path, "w") as fh:
        json.dump(_clean(body), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
