"""On-disk memory-mapped CSR sparse matrix store with per-row metadata.

Directory layout::

    header.json   format_version, dims, nnz, widths, metadata column schema
    rowptr.bin    uint64 LE, length n_rows+1
    colidx.bin    uint64 LE, length nnz
    values.bin    float32 LE, length nnz
    meta/<column>.bin

Numeric metadata columns are flat int64/float64 LE arrays; string columns
are length-prefixed (uint32 LE) UTF-8 records.

Opening a store maps the binary files and performs O(1) consistency checks
(header sizes vs. file sizes, first/last row pointer), so open time does not
grow with the data. `SparseMatrixStore.deep_validate` does the full scan.
"""

from __future__ import annotations

import io
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import (
    DimensionError,
    IngestParseError,
    StoreCorruptionError,
    StoreVersionError,
    ValidationError,
)

FORMAT_VERSION = 1

_HEADER = "header.json"
_ROWPTR = "rowptr.bin"
_COLIDX = "colidx.bin"
_VALUES = "values.bin"
_METADIR = "meta"


@dataclass(frozen=True)
class RowSlice:
    """Zero-copy view of one matrix row."""

    row_index: int
    cols: np.ndarray
    vals: np.ndarray

    def __len__(self) -> int:
        return len(self.cols)


@dataclass(frozen=True)
class ConversionReport:
    rows_in: int
    entries_in: int
    duplicates_merged: int
    zeros_dropped: int
    elapsed: float


def _parse_coordinate_text(path: Path):
    """Parse a 1-based coordinate-format matrix file.

    Returns (n_rows, n_cols, entry rows, cols, vals) with 0-based indices.
    Comment lines start with '%'; the first data line is `rows cols nnz`.
    """
    entry_lines: list[tuple[int, str]] = []
    header: tuple[int, int, int] | None = None
    header_line_no = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("%"):
                continue
            if header is None:
                parts = text.split()
                if len(parts) != 3:
                    raise IngestParseError(line_no, f"expected 'rows cols nnz', got {text!r}")
                try:
                    header = (int(parts[0]), int(parts[1]), int(parts[2]))
                except ValueError:
                    raise IngestParseError(line_no, f"non-integer dimension in {text!r}") from None
                header_line_no = line_no
                if min(header) < 0:
                    raise IngestParseError(line_no, "negative dimension or count")
            else:
                entry_lines.append((line_no, text))
    if header is None:
        raise IngestParseError(0, "missing 'rows cols nnz' header line")
    n_rows, n_cols, declared_nnz = header
    if len(entry_lines) != declared_nnz:
        raise IngestParseError(
            header_line_no,
            f"header declares {declared_nnz} entries but file holds {len(entry_lines)}",
        )

    if not entry_lines:
        empty = np.empty(0)
        return n_rows, n_cols, empty.astype(np.int64), empty.astype(np.int64), empty.astype(np.float32)

    try:
        table = np.loadtxt(io.StringIO("\n".join(t for _, t in entry_lines)), ndmin=2)
        if table.shape[1] != 3:
            raise ValueError("wrong column count")
    except ValueError:
        # Locate the offending line for the error message.
        for line_no, text in entry_lines:
            parts = text.split()
            if len(parts) != 3:
                raise IngestParseError(line_no, f"expected 'row col value', got {text!r}") from None
            try:
                int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise IngestParseError(line_no, f"malformed entry {text!r}") from None
        raise

    rows_f, cols_f = table[:, 0], table[:, 1]
    for arr, what in ((rows_f, "row"), (cols_f, "column")):
        bad = np.nonzero(arr != np.floor(arr))[0]
        if bad.size:
            raise IngestParseError(entry_lines[bad[0]][0], f"non-integer {what} index")
    rows = rows_f.astype(np.int64) - 1
    cols = cols_f.astype(np.int64) - 1
    for arr, n, what in ((rows, n_rows, "row"), (cols, n_cols, "column")):
        bad = np.nonzero((arr < 0) | (arr >= n))[0]
        if bad.size:
            raise IngestParseError(
                entry_lines[bad[0]][0], f"{what} index out of range (matrix is {n_rows}x{n_cols})"
            )
    return n_rows, n_cols, rows, cols, table[:, 2].astype(np.float32)


def _infer_column(values: list[str]):
    """Infer (dtype name, typed array/list) for one metadata column."""
    try:
        return "int", np.array([int(v) for v in values], dtype=np.int64)
    except ValueError:
        pass
    try:
        return "float", np.array([float(v) for v in values], dtype=np.float64)
    except ValueError:
        return "str", values


def _parse_metadata_table(path: Path, n_rows: int):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    lines = [ln for ln in lines if ln != ""]
    if not lines:
        raise ValidationError(f"metadata table {path} is empty")
    names = lines[0].split("\t")
    body = [ln.split("\t") for ln in lines[1:]]
    if len(body) != n_rows:
        raise DimensionError(
            f"metadata table has {len(body)} rows but matrix has {n_rows}"
        )
    for i, row in enumerate(body):
        if len(row) != len(names):
            raise ValidationError(f"metadata row {i + 1} has {len(row)} fields, expected {len(names)}")
    columns = []
    for j, name in enumerate(names):
        dtype, data = _infer_column([row[j] for row in body])
        columns.append((name, dtype, data))
    return columns


def _write_string_column(path: Path, values: list[str]) -> None:
    with open(path, "wb") as fh:
        for v in values:
            payload = v.encode("utf-8")
            fh.write(len(payload).to_bytes(4, "little"))
            fh.write(payload)


def build_store(
    ingest_path: str | Path,
    out_dir: str | Path,
    metadata_path: str | Path | None = None,
    overwrite: bool = False,
) -> ConversionReport:
    """Convert a coordinate-format matrix file into a store directory.

    Duplicate (row, col) entries are summed, explicit zeros dropped, and
    each row's entries are sorted by column.
    """
    t0 = time.perf_counter()
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()):
        if not overwrite:
            raise ValidationError(f"output directory {out} exists and is not empty")
    out.mkdir(parents=True, exist_ok=True)

    n_rows, n_cols, rows, cols, vals = _parse_coordinate_text(Path(ingest_path))
    entries_in = len(vals)

    nz = vals != 0.0
    zeros_dropped = int(entries_in - nz.sum())
    rows, cols, vals = rows[nz], cols[nz], vals[nz]

    duplicates_merged = 0
    if len(rows):
        keys = rows * np.int64(n_cols) + cols
        uniq, inverse = np.unique(keys, return_inverse=True)
        duplicates_merged = int(len(keys) - len(uniq))
        merged = np.bincount(inverse, weights=vals.astype(np.float64), minlength=len(uniq))
        rows = (uniq // n_cols).astype(np.int64)
        cols = (uniq % n_cols).astype(np.int64)
        vals = merged.astype(np.float32)
        # Duplicates may cancel to zero; canonical form stores no zeros.
        nz = vals != 0.0
        zeros_dropped += int(len(vals) - nz.sum())
        rows, cols, vals = rows[nz], cols[nz], vals[nz]

    row_counts = np.bincount(rows, minlength=n_rows) if n_rows else np.zeros(0, dtype=np.int64)
    row_ptr = np.zeros(n_rows + 1, dtype=np.uint64)
    np.cumsum(row_counts, out=row_ptr[1:])

    row_ptr.astype("<u8").tofile(out / _ROWPTR)
    cols.astype("<u8").tofile(out / _COLIDX)
    vals.astype("<f4").tofile(out / _VALUES)

    meta_schema = []
    if metadata_path is not None:
        columns = _parse_metadata_table(Path(metadata_path), n_rows)
        meta_dir = out / _METADIR
        meta_dir.mkdir(exist_ok=True)
        for name, dtype, data in columns:
            target = meta_dir / f"{name}.bin"
            if dtype == "str":
                _write_string_column(target, data)
            elif dtype == "int":
                data.astype("<i8").tofile(target)
            else:
                data.astype("<f8").tofile(target)
            meta_schema.append({"name": name, "dtype": dtype})

    header = {
        "format_version": FORMAT_VERSION,
        "n_rows": int(n_rows),
        "n_cols": int(n_cols),
        "nnz": int(len(vals)),
        "value_width": 32,
        "index_width": 64,
        "metadata": meta_schema,
    }
    with open(out / _HEADER, "w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)

    return ConversionReport(
        rows_in=n_rows,
        entries_in=entries_in,
        duplicates_merged=duplicates_merged,
        zeros_dropped=zeros_dropped,
        elapsed=time.perf_counter() - t0,
    )


class SparseMatrixStore:
    """Read handle over a store directory; arrays are memory-mapped.

    Handles are immutable after open and safe to share across reader
    threads. Use :func:`open_store` to construct one.
    """

    def __init__(self, directory: Path, header: dict):
        self.directory = directory
        self.format_version: int = header["format_version"]
        self.n_rows: int = header["n_rows"]
        self.n_cols: int = header["n_cols"]
        self.nnz: int = header["nnz"]
        self._meta_schema = {c["name"]: c["dtype"] for c in header["metadata"]}
        self._meta_cache: dict[str, object] = {}

        self.row_ptr = self._map(directory / _ROWPTR, "<u8", self.n_rows + 1)
        self.col_idx = self._map(directory / _COLIDX, "<u8", self.nnz)
        self.values = self._map(directory / _VALUES, "<f4", self.nnz)

        if self.n_rows >= 0:
            if int(self.row_ptr[0]) != 0:
                raise StoreCorruptionError("row_ptr[0] != 0")
            if int(self.row_ptr[-1]) != self.nnz:
                raise StoreCorruptionError(
                    f"row_ptr[{self.n_rows}] = {int(self.row_ptr[-1])} but header nnz = {self.nnz}"
                )

    @staticmethod
    def _map(path: Path, dtype: str, count: int) -> np.ndarray:
        itemsize = np.dtype(dtype).itemsize
        expected = count * itemsize
        try:
            actual = os.stat(path).st_size
        except FileNotFoundError:
            raise StoreCorruptionError(f"missing store file {path.name}") from None
        if actual != expected:
            raise StoreCorruptionError(
                f"{path.name}: expected {expected} bytes for {count} entries, found {actual}"
            )
        if count == 0:
            return np.empty(0, dtype=dtype)
        return np.memmap(path, dtype=dtype, mode="r", shape=(count,))

    @property
    def metadata_columns(self) -> dict[str, str]:
        """Mapping of metadata column name to dtype name."""
        return dict(self._meta_schema)

    def get_row(self, r: int) -> RowSlice:
        if not 0 <= r < self.n_rows:
            raise IndexError(f"row {r} out of range for {self.n_rows}-row store")
        lo, hi = int(self.row_ptr[r]), int(self.row_ptr[r + 1])
        return RowSlice(row_index=r, cols=self.col_idx[lo:hi], vals=self.values[lo:hi])

    def iter_rows(self) -> Iterator[RowSlice]:
        for r in range(self.n_rows):
            yield self.get_row(r)

    def _meta_column(self, name: str):
        if name not in self._meta_schema:
            raise KeyError(f"unknown metadata column {name!r}")
        if name not in self._meta_cache:
            path = self.directory / _METADIR / f"{name}.bin"
            dtype = self._meta_schema[name]
            if dtype == "int":
                self._meta_cache[name] = self._map(path, "<i8", self.n_rows)
            elif dtype == "float":
                self._meta_cache[name] = self._map(path, "<f8", self.n_rows)
            else:
                self._meta_cache[name] = _StringColumn(path, self.n_rows)
        return self._meta_cache[name]

    def get_metadata(self, column: str, r: int):
        if not 0 <= r < self.n_rows:
            raise IndexError(f"row {r} out of range for {self.n_rows}-row store")
        col = self._meta_column(column)
        dtype = self._meta_schema[column]
        if dtype == "int":
            return int(col[r])
        if dtype == "float":
            return float(col[r])
        return col[r]

    def deep_validate(self) -> None:
        """Full-scan structural validation; raises StoreCorruptionError."""
        rp = np.asarray(self.row_ptr, dtype=np.int64)
        if np.any(np.diff(rp) < 0):
            raise StoreCorruptionError("row_ptr is not monotone non-decreasing")
        ci = np.asarray(self.col_idx, dtype=np.int64)
        if ci.size and (ci.min() < 0 or ci.max() >= self.n_cols):
            raise StoreCorruptionError("column index out of range")
        if ci.size > 1:
            same_row = np.ones(ci.size - 1, dtype=bool)
            boundaries = rp[1:-1]
            boundaries = boundaries[(boundaries > 0) & (boundaries < ci.size)]
            same_row[boundaries - 1] = False
            if np.any((np.diff(ci) <= 0) & same_row):
                raise StoreCorruptionError("columns not strictly increasing within a row")
        for name in self._meta_schema:
            col = self._meta_column(name)
            if len(col) != self.n_rows:
                raise StoreCorruptionError(f"metadata column {name!r} length mismatch")


class _StringColumn:
    """Lazy reader for a length-prefixed UTF-8 string column."""

    def __init__(self, path: Path, n_rows: int):
        self._data = path.read_bytes()
        offsets = []
        pos = 0
        while pos < len(self._data):
            offsets.append(pos)
            if pos + 4 > len(self._data):
                raise StoreCorruptionError(f"{path.name}: truncated length prefix")
            length = int.from_bytes(self._data[pos : pos + 4], "little")
            pos += 4 + length
        if pos != len(self._data) or len(offsets) != n_rows:
            raise StoreCorruptionError(f"{path.name}: expected {n_rows} string records")
        self._offsets = offsets

    def __len__(self) -> int:
        return len(self._offsets)

    def __getitem__(self, r: int) -> str:
        pos = self._offsets[r]
        length = int.from_bytes(self._data[pos : pos + 4], "little")
        return self._data[pos + 4 : pos + 4 + length].decode("utf-8")


def open_store(directory: str | Path) -> SparseMatrixStore:
    """Open a store directory; O(1) validation, no bulk reads."""
    directory = Path(directory)
    header_path = directory / _HEADER
    try:
        with open(header_path, "r", encoding="utf-8") as fh:
            header = json.load(fh)
    except FileNotFoundError:
        raise StoreCorruptionError(f"missing {header_path}") from None
    except json.JSONDecodeError as exc:
        raise StoreCorruptionError(f"unreadable header: {exc}") from None
    for key in ("format_version", "n_rows", "n_cols", "nnz"):
        if key not in header:
            raise StoreCorruptionError(f"header missing key {key!r}")
    if header["format_version"] != FORMAT_VERSION:
        raise StoreVersionError(
            f"unsupported format version {header['format_version']} (supported: {FORMAT_VERSION})"
        )
    header.setdefault("metadata", [])
    return SparseMatrixStore(directory, header)
