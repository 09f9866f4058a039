"""Core matrix and dataset types plus deterministic randomness plumbing.

Conventions used throughout the package:

* rows are time samples, columns are voxels;
* matrices are float64, C-contiguous, and frozen (read-only) after
  construction, so every type here is safe to share across threads;
* randomness always flows through :class:`RngSpec`, never through global
  state.

Random streams are PCG64 generators keyed by ``SeedSequence([seed,
*sha256(stream_label)])``: both the bit generator and the label hashing
are stable across platforms and library versions, which makes determinism
testable (see the golden-sequence tests).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError

__all__ = [
    "RecordMatrix",
    "Dataset",
    "Decomposition",
    "RngSpec",
    "concatenate",
]


def _as_frozen_f64(a, what: str) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, order="C", copy=True)
    if not np.isfinite(arr).all():
        raise DataError(f"{what} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RecordMatrix:
    """One record's data: ``n_s`` time samples by ``p`` voxels."""

    data: np.ndarray
    record_id: str

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise DimensionError(f"record {self.record_id!r}: data must be 2-d")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise DimensionError(
                f"record {self.record_id!r}: shape {data.shape} has an empty axis"
            )
        object.__setattr__(
            self, "data", _as_frozen_f64(data, f"record {self.record_id!r}")
        )

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        if not isinstance(other, RecordMatrix):
            return NotImplemented
        return self.record_id == other.record_id and np.array_equal(
            self.data, other.data
        )


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of records sharing the same voxel count ``p``."""

    records: tuple[RecordMatrix, ...]

    def __post_init__(self):
        records = tuple(self.records)
        if not records:
            raise DataError("a dataset needs at least one record")
        p = records[0].p
        for rec in records[1:]:
            if rec.p != p:
                raise DimensionError(
                    f"record {rec.record_id!r} has p={rec.p}, "
                    f"expected p={p} like record {records[0].record_id!r}"
                )
        object.__setattr__(self, "records", records)

    @property
    def p(self) -> int:
        return self.records[0].p

    @property
    def total_rows(self) -> int:
        return sum(rec.n_samples for rec in self.records)

    @property
    def row_counts(self) -> tuple[int, ...]:
        return tuple(rec.n_samples for rec in self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.records == other.records

    def concatenate(self) -> np.ndarray:
        return concatenate(self)


def concatenate(ds: Dataset) -> np.ndarray:
    """Stack the records of ``ds`` vertically, in record order.

    Returns a fresh writable (total_rows, p) array; row block ``s`` equals
    ``ds.records[s].data``.
    """
    return np.vstack([rec.data for rec in ds.records])


@dataclass(frozen=True, eq=False)
class Decomposition:
    """A factorization: dense temporal atoms paired with sparse spatial maps.

    ``temporal_atoms`` is (rows, k) with rows grouped per record
    (``record_rows`` holds the block sizes), ``spatial_maps`` is (p, k).
    Every atom column has l2 norm at most 1 (up to 1e-10 slack); map
    columns may be exactly zero (dead atoms). ``objective_value`` is
    ``||X - U V^T||_F^2 + lam * ||V||_1`` for the data the factors were
    fit on.
    """

    temporal_atoms: np.ndarray
    spatial_maps: np.ndarray
    lam: float
    objective_value: float
    record_rows: tuple[int, ...]

    def __post_init__(self):
        U = _as_frozen_f64(self.temporal_atoms, "temporal_atoms")
        V = np.array(self.spatial_maps, dtype=np.float64, order="C", copy=True)
        if U.ndim != 2 or V.ndim != 2:
            raise DimensionError("factors must be 2-d matrices")
        if U.shape[1] != V.shape[1]:
            raise DimensionError(
                f"temporal_atoms has k={U.shape[1]} but spatial_maps has "
                f"k={V.shape[1]}"
            )
        if np.isnan(V).any():
            raise DataError("spatial_maps contains NaN")
        V.setflags(write=False)
        norms = np.linalg.norm(U, axis=0)
        if norms.size and norms.max() > 1.0 + 1e-10:
            raise DataError(
                f"temporal atom norm {norms.max():.17g} exceeds the unit bound"
            )
        if self.lam < 0:
            raise DataError("lam must be nonnegative")
        if sum(self.record_rows) != U.shape[0]:
            raise DimensionError(
                "record_rows must partition the temporal atom rows"
            )
        object.__setattr__(self, "temporal_atoms", U)
        object.__setattr__(self, "spatial_maps", V)
        object.__setattr__(self, "record_rows", tuple(self.record_rows))

    @property
    def k(self) -> int:
        return self.spatial_maps.shape[1]

    @property
    def p(self) -> int:
        return self.spatial_maps.shape[0]


def _label_entropy(label: str) -> list[int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


@dataclass(frozen=True)
class RngSpec:
    """A reproducible random stream: a 64-bit seed plus a stream label.

    Equal (seed, stream_label) pairs produce identical draw sequences on
    every platform. Derived streams (``derive``) extend the label, so
    per-record or per-phase streams are independent of iteration order.
    """

    seed: int
    stream_label: str = ""

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64):
            raise DataError(f"seed {self.seed} is not a 64-bit unsigned integer")
        object.__setattr__(self, "seed", int(self.seed))

    def derive(self, suffix: str) -> "RngSpec":
        label = f"{self.stream_label}/{suffix}" if self.stream_label else suffix
        return RngSpec(self.seed, label)

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence([self.seed, *_label_entropy(self.stream_label)])
        return np.random.Generator(np.random.PCG64(seq))
