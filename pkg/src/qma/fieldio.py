"""Field files and CSV tables.

A field file is one ASCII header line followed by little-endian float64
values in C order over the active axes::

    QMAFIELD 1 n=2 active=1,5 N=64

CSV tables use fixed column orders and ``repr`` floats so that repeated runs
produce identical bytes.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from qma.torus import SpectralGrid

MAGIC = "QMAFIELD"
VERSION = 1


class FieldFormatError(ValueError):
    pass


def write_field(path, grid: SpectralGrid, values: np.ndarray) -> None:
    values = np.asarray(values, dtype="<f8")
    if values.shape != grid.shape:
        raise ValueError(f"values shape {values.shape} does not match grid {grid.shape}")
    active = ",".join(str(c) for c in grid.labels)
    header = f"{MAGIC} {VERSION} n={grid.n} active={active} N={grid.N}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(values).tobytes())


def read_field(path) -> tuple[SpectralGrid, np.ndarray]:
    """Inverse of :func:`write_field`.

    Raises:
        FieldFormatError: bad magic, version, header fields or payload size.
    """
    data = Path(path).read_bytes()
    end = data.find(b"\n")
    if end < 0:
        raise FieldFormatError(f"{path}: missing header line")
    parts = data[:end].decode("ascii", errors="replace").split()
    if len(parts) != 5 or parts[0] != MAGIC:
        raise FieldFormatError(f"{path}: not a field file")
    if parts[1] != str(VERSION):
        raise FieldFormatError(f"{path}: unsupported version {parts[1]}")
    try:
        kv = dict(p.split("=", 1) for p in parts[2:])
        n = int(kv["n"])
        labels = [int(c) for c in kv["active"].split(",")]
        N = int(kv["N"])
    except (KeyError, ValueError) as exc:
        raise FieldFormatError(f"{path}: malformed header ({exc})") from None
    grid = SpectralGrid.from_labels(n, labels, N)
    payload = data[end + 1:]
    if len(payload) != 8 * grid.size:
        raise FieldFormatError(f"{path}: expected {8 * grid.size} bytes, found {len(payload)}")
    values = np.frombuffer(payload, dtype="<f8").reshape(grid.shape).astype(float)
    return grid, values


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def table_to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError("row length does not match the header")
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_table(path, columns, rows) -> None:
    Path(path).write_text(table_to_csv(columns, rows))


def field_to_csv(path, grid: SpectralGrid, values: np.ndarray, name: str = "value") -> None:
    """One row per grid point: active coordinates, then the value."""
    mesh = grid.coordinates()
    cols = [f"x{c}" for c in grid.labels] + [name]
    flat = [m.ravel() for m in mesh] + [np.asarray(values).ravel()]
    write_table(path, cols, zip(*flat))
