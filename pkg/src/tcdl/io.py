"""Binary container formats and delimited output.

Two little-endian containers:

* dataset file: magic ``TCDL0001`` | u32 record_count | u32 p | per
  record [u32 id_len | id UTF-8 bytes | u32 n_s | n_s*p float64
  row-major];
* single matrix file: magic ``TCDM0001`` | u32 rows | u32 cols |
  row-major float64.

Reads are validated eagerly; malformed input raises FormatError carrying
the byte offset of the problem. Round-trips are bit-exact for float64.

Metric outputs are CSV with a header row and '.' decimal separator;
floats are formatted with repr() so values round-trip exactly and the
bytes are reproducible.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .data import Dataset, RecordMatrix
from .errors import DataError, FormatError

DATASET_MAGIC = b"TCDL0001"
MATRIX_MAGIC = b"TCDM0001"
_U32_MAX = 2**32 - 1

__all__ = [
    "DATASET_MAGIC",
    "MATRIX_MAGIC",
    "write_dataset",
    "read_dataset",
    "write_matrix",
    "read_matrix",
    "write_csv",
    "format_cell",
]


def _check_u32(value: int, what: str) -> int:
    if not 0 <= value <= _U32_MAX:
        raise FormatError(f"{what} {value} does not fit in an unsigned 32-bit field")
    return value


def _pack_u32(value: int) -> bytes:
    return struct.pack("<I", value)


class _Reader:
    """Tracks the byte offset so format errors can point at it."""

    def __init__(self, fh, path):
        self.fh = fh
        self.path = path
        self.offset = 0

    def read(self, n: int, what: str) -> bytes:
        buf = self.fh.read(n)
        if len(buf) != n:
            raise FormatError(
                f"{self.path}: truncated file, wanted {n} bytes for {what} "
                f"but got {len(buf)}",
                offset=self.offset,
            )
        self.offset += n
        return buf

    def read_u32(self, what: str) -> int:
        return struct.unpack("<I", self.read(4, what))[0]


def write_dataset(ds: Dataset, path) -> None:
    """Serialize ``ds``; ``read_dataset`` restores it bit-exactly."""
    if len(ds.records) == 0:  # unreachable through Dataset, kept for raw callers
        raise DataError("refusing to write a dataset with no records")
    _check_u32(len(ds.records), "record count")
    _check_u32(ds.p, "voxel count p")
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(_pack_u32(len(ds.records)))
        fh.write(_pack_u32(ds.p))
        for rec in ds.records:
            ident = rec.record_id.encode("utf-8")
            _check_u32(len(ident), f"record id length of {rec.record_id!r}")
            _check_u32(rec.n_samples, f"row count of record {rec.record_id!r}")
            fh.write(_pack_u32(len(ident)))
            fh.write(ident)
            fh.write(_pack_u32(rec.n_samples))
            fh.write(np.ascontiguousarray(rec.data, dtype="<f8").tobytes())


def read_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        r = _Reader(fh, path)
        magic = r.read(len(DATASET_MAGIC), "magic")
        if magic != DATASET_MAGIC:
            raise FormatError(
                f"{path}: bad magic, expected {DATASET_MAGIC!r} but found {magic!r}",
                offset=0,
            )
        n_records = r.read_u32("record count")
        if n_records == 0:
            raise FormatError(f"{path}: dataset has no records", offset=8)
        p = r.read_u32("voxel count")
        records = []
        for i in range(n_records):
            id_len = r.read_u32(f"id length of record {i}")
            ident = r.read(id_len, f"id of record {i}").decode("utf-8")
            n_s = r.read_u32(f"row count of record {ident!r}")
            if n_s == 0 or p == 0:
                raise FormatError(
                    f"{path}: record {ident!r} has empty shape ({n_s}, {p})",
                    offset=r.offset,
                )
            payload = r.read(n_s * p * 8, f"values of record {ident!r}")
            data = np.frombuffer(payload, dtype="<f8").reshape(n_s, p)
            records.append(RecordMatrix(data=data, record_id=ident))
        trailing = fh.read(1)
        if trailing:
            raise FormatError(
                f"{path}: {len(trailing)}+ unexpected trailing bytes",
                offset=r.offset,
            )
    return Dataset(records=tuple(records))


def write_matrix(matrix: np.ndarray, path) -> None:
    m = np.ascontiguousarray(matrix, dtype="<f8")
    if m.ndim != 2:
        raise DataError(f"matrix file wants a 2-d array, got shape {m.shape}")
    _check_u32(m.shape[0], "row count")
    _check_u32(m.shape[1], "column count")
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(_pack_u32(m.shape[0]))
        fh.write(_pack_u32(m.shape[1]))
        fh.write(m.tobytes())


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        r = _Reader(fh, path)
        magic = r.read(len(MATRIX_MAGIC), "magic")
        if magic != MATRIX_MAGIC:
            raise FormatError(
                f"{path}: bad magic, expected {MATRIX_MAGIC!r} but found {magic!r}",
                offset=0,
            )
        rows = r.read_u32("row count")
        cols = r.read_u32("column count")
        payload = r.read(rows * cols * 8, "matrix values")
        trailing = fh.read(1)
        if trailing:
            raise FormatError(
                f"{path}: {len(trailing)}+ unexpected trailing bytes",
                offset=r.offset,
            )
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy()


def format_cell(value) -> str:
    """Locale-independent cell formatting; floats keep full precision."""
    if value is None:
        return ""
    if isinstance(value, (np.floating, float)):
        return repr(float(value))
    if isinstance(value, (np.integer, int)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
