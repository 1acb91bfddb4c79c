"""Time-indexed matrix data: container, long-csv / mkt-binary formats, CSV tables.

Formats
-------
long-csv
    Header ``t,row,col,value``; one line per cell, zero-based indices, any
    row order. Values are written with ``repr`` so they round-trip exactly.
mkt-binary
    ``b"MKT1"`` followed by ``T, p1, p2`` as little-endian uint32 and then
    ``T*p1*p2`` little-endian float64 values in (t, row, col) order.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import FormatError, ParameterError, ValidationError

MAGIC = b"MKT1"
_HEADER = struct.Struct("<4sIII")
FORMATS = ("long-csv", "mkt-binary")


@dataclass(frozen=True)
class MatrixSeries:
    """A stack of ``T`` real ``p1 x p2`` matrices, stored as a ``(T, p1, p2)`` array."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ParameterError(f"MatrixSeries needs a non-empty (T, p1, p2) array, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def p1(self) -> int:
        return self.data.shape[1]

    @property
    def p2(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    def __len__(self) -> int:
        return self.T

    def __getitem__(self, t):
        return self.data[t]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MatrixSeries):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None  # type: ignore[assignment]

    def check_finite(self) -> "MatrixSeries":
        bad = np.argwhere(~np.isfinite(self.data))
        if bad.size:
            t, i, j = (int(v) for v in bad[0])
            raise ValidationError(f"non-finite value {self.data[t, i, j]!r} at (t={t}, row={i}, col={j})")
        return self


def _check_format(fmt: str) -> None:
    if fmt not in FORMATS:
        raise ParameterError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def load_series(path: str | Path, format: str = "long-csv") -> MatrixSeries:
    """Read a series written in ``format``; every entry must be finite."""
    _check_format(format)
    path = Path(path)
    if format == "mkt-binary":
        series = _load_binary(path)
    else:
        series = _load_long_csv(path)
    return series.check_finite()


def _load_binary(path: Path) -> MatrixSeries:
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, T, p1, p2 = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic bytes {magic!r}, expected {MAGIC!r}")
    if min(T, p1, p2) < 1:
        raise FormatError(f"{path}: zero dimension in header (T={T}, p1={p1}, p2={p2})")
    expected = _HEADER.size + 8 * T * p1 * p2
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for T={T}, p1={p1}, p2={p2}, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(T, p1, p2)
    return MatrixSeries(data.astype(np.float64))


def _load_long_csv(path: Path) -> MatrixSeries:
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "row", "col", "value"]:
            raise FormatError(f"{path}: header must be 't,row,col,value', got {header!r}")
        cells: dict[tuple[int, int, int], float] = {}
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 fields, got {len(rec)}")
            try:
                key = (int(rec[0]), int(rec[1]), int(rec[2]))
                value = float(rec[3])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if min(key) < 0:
                raise FormatError(f"{path}:{lineno}: negative index {key}")
            if key in cells:
                raise FormatError(f"{path}: duplicate cell (t={key[0]}, row={key[1]}, col={key[2]})")
            if not math.isfinite(value):
                raise ValidationError(f"non-finite value {value!r} at (t={key[0]}, row={key[1]}, col={key[2]})")
            cells[key] = value
    if not cells:
        raise FormatError(f"{path}: no data rows")
    idx = np.array(list(cells.keys()), dtype=np.int64)
    T, p1, p2 = (int(m) + 1 for m in idx.max(axis=0))
    if len(cells) != T * p1 * p2:
        present = np.zeros((T, p1, p2), dtype=bool)
        present[idx[:, 0], idx[:, 1], idx[:, 2]] = True
        t, i, j = (int(v) for v in np.argwhere(~present)[0])
        raise FormatError(f"{path}: missing cell (t={t}, row={i}, col={j})")
    data = np.empty((T, p1, p2))
    data[idx[:, 0], idx[:, 1], idx[:, 2]] = np.fromiter(cells.values(), dtype=np.float64, count=len(cells))
    return MatrixSeries(data)


def save_series(series: MatrixSeries | np.ndarray, path: str | Path, format: str = "long-csv") -> None:
    """Write ``series`` in ``format``. OS errors propagate unchanged."""
    _check_format(format)
    if not isinstance(series, MatrixSeries):
        series = MatrixSeries(series)
    path = Path(path)
    if format == "mkt-binary":
        with path.open("wb") as fh:
            fh.write(_HEADER.pack(MAGIC, series.T, series.p1, series.p2))
            fh.write(series.data.astype("<f8").tobytes(order="C"))
        return
    T, p1, p2 = series.shape
    lines = ["t,row,col,value\n"]
    flat = series.data.reshape(-1).tolist()
    k = 0
    for t in range(T):
        for i in range(p1):
            for j in range(p2):
                lines.append(f"{t},{i},{j},{flat[k]!r}\n")
                k += 1
    with path.open("w", newline="") as fh:
        fh.writelines(lines)


def format_value(value: Any) -> str:
    """Render one table cell; floats get 17 significant digits."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_table(
    rows: Sequence[Mapping[str, Any]],
    path: str | Path,
    comments: Iterable[str] = (),
) -> None:
    """Write records as CSV with a header row.

    ``comments`` are emitted first, each prefixed with ``# ``. All records must
    share the column set of the first one; an empty ``rows`` is rejected.
    """
    if not rows:
        raise ValidationError("refusing to write an empty table")
    columns = list(rows[0].keys())
    colset = set(columns)
    for n, row in enumerate(rows):
        if set(row.keys()) != colset:
            raise ValidationError(f"row {n} has columns {sorted(row)}, expected {sorted(colset)}")
    with Path(path).open("w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row[c]) for c in columns])


def read_table(path: str | Path) -> list[dict[str, str]]:
    """Read a table written by :func:`write_table`, skipping ``#`` comment lines."""
    with Path(path).open(newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))
