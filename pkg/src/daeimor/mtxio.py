"""Sparse coordinate text files and matrix bundles.

File layout::

    %%MatrixMarket matrix coordinate real general
    rows cols nnz
    i j value            (1-based, one triplet per line, row-major order)

Values are written with 17 significant digits so every double round-trips
exactly. The banner line makes the files readable by Matrix Market tools.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from daeimor.errors import ConfigError, DimensionMismatch, DuplicateEntry, MatrixFormatError
from daeimor.linalg import dense
from daeimor.systems import Index2System, ReducedModel

BANNER = "%%MatrixMarket matrix coordinate real general"
SYSTEM_BLOCKS = ("E11", "A11", "A21", "B1", "B2", "C1", "C2", "D")
OPTIONAL_BLOCKS = ("B2", "C2", "D")
ROM_BLOCKS = ("Er", "Ar", "Br", "Cr", "Dr", "V", "W")
SPARSE_BLOCKS = ("E11", "A11", "A21")


def fmt(x: float) -> str:
    return "%.17g" % x


def write_matrix(path, M) -> None:
    M = sp.coo_matrix(M)
    M.sum_duplicates()
    order = np.lexsort((M.col, M.row))
    rows, cols, vals = M.row[order], M.col[order], M.data[order]
    keep = vals != 0
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    lines = [BANNER, f"{M.shape[0]} {M.shape[1]} {len(vals)}"]
    lines += [f"{i + 1} {j + 1} {fmt(v)}" for i, j, v in zip(rows, cols, vals)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path, sparse=False):
    """Read a coordinate file. Duplicate or out-of-range entries are errors."""
    header = None
    entries = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("%"):
                continue
            tokens = line.split()
            if header is None:
                try:
                    header = tuple(int(t) for t in tokens)
                except ValueError:
                    header = ()
                if len(header) != 3 or min(header) < 0:
                    raise MatrixFormatError(f"{path}:{lineno}: malformed header {line!r}")
                continue
            if len(tokens) != 3:
                raise MatrixFormatError(f"{path}:{lineno}: expected 'i j value', got {line!r}")
            try:
                i, j, v = int(tokens[0]), int(tokens[1]), float(tokens[2])
            except ValueError:
                raise MatrixFormatError(f"{path}:{lineno}: cannot parse {line!r}") from None
            entries.append((i, j, v, lineno))
    if header is None:
        raise MatrixFormatError(f"{path}: missing header")
    rows, cols, nnz = header
    if len(entries) != nnz:
        raise MatrixFormatError(f"{path}: header declares {nnz} entries, found {len(entries)}")
    seen = set()
    for i, j, _, lineno in entries:
        if not (1 <= i <= rows and 1 <= j <= cols):
            raise MatrixFormatError(f"{path}:{lineno}: index ({i}, {j}) out of range")
        if (i, j) in seen:
            raise DuplicateEntry(f"{path}:{lineno}: duplicate entry ({i}, {j})")
        seen.add((i, j))
    r = np.array([e[0] - 1 for e in entries], dtype=int)
    c = np.array([e[1] - 1 for e in entries], dtype=int)
    v = np.array([e[2] for e in entries], dtype=float)
    M = sp.csr_matrix((v, (r, c)), shape=(rows, cols))
    return M if sparse else M.toarray()


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                          encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _symmetric(M) -> bool:
    D = dense(M)
    return bool(D.shape[0] == D.shape[1] and np.array_equal(D, D.T))


def write_system_bundle(directory, sys: Index2System, provenance=None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in SYSTEM_BLOCKS:
        write_matrix(d / f"{name}.mtx", getattr(sys, name))
    write_json(d / "manifest.json", {
        "kind": "index2",
        "dimensions": {"n1": sys.n1, "n2": sys.n2, "m": sys.m, "p": sys.p},
        "symmetry": {"E11": _symmetric(sys.E11), "A11": _symmetric(sys.A11)},
        "files": {name: f"{name}.mtx" for name in SYSTEM_BLOCKS},
        "provenance": provenance or {},
    })


def write_rom_bundle(directory, rom: ReducedModel, provenance=None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in ROM_BLOCKS:
        write_matrix(d / f"{name}.mtx", getattr(rom, name))
    write_json(d / "manifest.json", {
        "kind": "reduced",
        "mode": rom.mode,
        "dimensions": {"r": rom.r, "n": rom.V.shape[0], "m": rom.m, "p": rom.p},
        "files": {name: f"{name}.mtx" for name in ROM_BLOCKS},
        "provenance": provenance or {},
    })


def bundle_kind(directory) -> str:
    return read_json(Path(directory) / "manifest.json").get("kind", "")


def read_bundle(directory):
    """Load an :class:`Index2System` or :class:`ReducedModel` bundle."""
    d = Path(directory)
    try:
        manifest = read_json(d / "manifest.json")
    except FileNotFoundError:
        raise ConfigError(f"{d} has no manifest.json") from None
    kind = manifest.get("kind")
    files = manifest.get("files", {})
    dims = manifest.get("dimensions", {})
    if kind == "index2":
        blocks = {}
        for name in SYSTEM_BLOCKS:
            path = d / files.get(name, f"{name}.mtx")
            if not path.exists():
                if name in OPTIONAL_BLOCKS:
                    blocks[name] = None
                    continue
                raise ConfigError(f"bundle {d} is missing {name}")
            blocks[name] = read_matrix(path, sparse=name in SPARSE_BLOCKS)
        sys = Index2System(**blocks)
        actual = {"n1": sys.n1, "n2": sys.n2, "m": sys.m, "p": sys.p}
        if any(dims.get(k, v) != v for k, v in actual.items()):
            raise DimensionMismatch(f"manifest dimensions {dims} do not match files {actual}")
        return sys
    if kind == "reduced":
        blocks = {name: read_matrix(d / files.get(name, f"{name}.mtx")) for name in ROM_BLOCKS}
        rom = ReducedModel(mode=manifest.get("mode", "petrov_galerkin"), **blocks)
        actual = {"r": rom.r, "n": rom.V.shape[0], "m": rom.m, "p": rom.p}
        if any(dims.get(k, v) != v for k, v in actual.items()):
            raise DimensionMismatch(f"manifest dimensions {dims} do not match files {actual}")
        return rom
    raise ConfigError(f"unknown bundle kind {kind!r} in {d}")


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(v if isinstance(v, str) else fmt(v) for v in row) for row in rows]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path):
    """Return (header, float array) for a CSV written by :func:`write_csv`."""
    text = Path(path).read_text().strip().splitlines()
    header = text[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in text[1:]]) \
        if len(text) > 1 else np.zeros((0, len(header)))
    return header, data
