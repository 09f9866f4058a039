"""Per-record time-dimension compression.

Each record (n_s x p, rows = time samples) is replaced by an m x p
summary. Three routes:

* ``exact_svd``: optimal rank-m row basis from a truncated SVD; serves
  as the precision oracle for the other two;
* ``range_finder``: randomized projection (Gaussian test matrix,
  optional power iterations, fixed oversampling) followed by rank-m
  truncation, with the residual computed exactly afterwards;
* ``subsample``: keep m rows on an even stride with a random offset.
  Cheap, but its error is uncontrolled and high-frequency content
  aliases.

Reduction is applied independently per record so between-record
variability survives; the reduced dataset concatenates to the
block-diagonal projection of the full concatenation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, RecordMatrix, RngSpec
from .errors import DimensionError, TcdlError, UsageError

METHODS = ("exact_svd", "range_finder", "subsample")

__all__ = [
    "METHODS",
    "ReductionPlan",
    "ReductionResult",
    "reduce_exact_svd",
    "reduce_range_finder",
    "reduce_subsample",
    "reduce_record",
    "reduce_dataset",
]


@dataclass(frozen=True)
class ReductionPlan:
    """How to compress one record: method, target rank, and randomness.

    Exactly one of ``m`` (absolute rank) or ``alpha`` (ratio of rows
    kept, m = round(alpha * n_s), floored at 1) must be given.
    ``oversample`` and ``power_iters`` only affect the range finder.
    """

    method: str
    m: int | None = None
    alpha: float | None = None
    oversample: int = 10
    power_iters: int = 1
    rng: RngSpec = RngSpec(0)

    def __post_init__(self):
        if self.method not in METHODS:
            raise UsageError(
                f"unknown reduction method {self.method!r}, expected one of {METHODS}"
            )
        if (self.m is None) == (self.alpha is None):
            raise UsageError("exactly one of m and alpha must be set")
        if self.m is not None and self.m < 1:
            raise DimensionError(f"m must be positive, got {self.m}")
        if self.alpha is not None and not 0.0 < self.alpha <= 1.0:
            raise DimensionError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.oversample < 0 or self.power_iters < 0:
            raise UsageError("oversample and power_iters must be nonnegative")

    def rank_for(self, n_samples: int) -> int:
        if self.m is not None:
            m = self.m
        else:
            m = max(1, int(round(self.alpha * n_samples)))
        if not 1 <= m <= n_samples:
            raise DimensionError(
                f"target rank m={m} outside the valid range [1, {n_samples}]"
            )
        return m


@dataclass(frozen=True, eq=False)
class ReductionResult:
    """Outcome of reducing one record.

    ``basis`` has orthonormal columns (n_s x m); it is None for
    subsampling, which keeps raw rows instead of projecting.
    ``residual_fro`` estimates the Frobenius norm of what the summary
    drops; for exact_svd it is the exact singular-value tail norm.
    """

    method: str
    m: int
    basis: np.ndarray | None
    reduced: np.ndarray
    residual_fro: float
    record_id: str = ""
    elapsed_ms: float = 0.0


def reduce_exact_svd(rec: RecordMatrix, m: int) -> ReductionResult:
    """Optimal rank-m reduction: basis = top-m left singular vectors."""
    if not 1 <= m <= rec.n_samples:
        raise DimensionError(
            f"record {rec.record_id!r}: m={m} outside [1, {rec.n_samples}]"
        )
    u, s, _ = np.linalg.svd(rec.data, full_matrices=False)
    basis = np.ascontiguousarray(u[:, :m])
    reduced = basis.T @ rec.data
    residual = float(np.sqrt(np.sum(s[m:] ** 2)))
    return ReductionResult(
        method="exact_svd",
        m=m,
        basis=basis,
        reduced=reduced,
        residual_fro=residual,
        record_id=rec.record_id,
    )


def reduce_range_finder(rec: RecordMatrix, plan: ReductionPlan) -> ReductionResult:
    """Randomized rank-m reduction of one record.

    Sketches the row space with a Gaussian test matrix of width
    m + oversample, optionally sharpens it with power iterations
    (re-orthonormalizing after every half-pass to avoid losing digits),
    then truncates to the m leading directions of the projected matrix.
    The residual is computed exactly from the reconstruction; at this
    scale that costs one extra matrix product.
    """
    if plan.method != "range_finder":
        raise UsageError(f"plan method is {plan.method!r}, not 'range_finder'")
    a = rec.data
    n_s = rec.n_samples
    m = plan.rank_for(n_s)
    width = m + plan.oversample
    if width > n_s:
        raise DimensionError(
            f"record {rec.record_id!r}: m + oversample = {width} exceeds n_s = {n_s}"
        )
    gen = plan.rng.generator()
    test = gen.standard_normal((rec.p, width))
    q, _ = np.linalg.qr(a @ test)
    for _ in range(plan.power_iters):
        z, _ = np.linalg.qr(a.T @ q)
        q, _ = np.linalg.qr(a @ z)
    projected = q.T @ a
    u_small, _, _ = np.linalg.svd(projected, full_matrices=False)
    basis = np.ascontiguousarray(q @ u_small[:, :m])
    reduced = basis.T @ a
    residual = float(np.linalg.norm(a - basis @ reduced))
    return ReductionResult(
        method="range_finder",
        m=m,
        basis=basis,
        reduced=reduced,
        residual_fro=residual,
        record_id=rec.record_id,
    )


def reduce_subsample(rec: RecordMatrix, plan: ReductionPlan) -> ReductionResult:
    """Keep m rows of the record on an even stride with a random offset.

    The retained rows are ``(offset + floor(j * n_s / m)) mod n_s``;
    the reported residual is the distance from the record to the
    least-squares projection onto the row span of the kept rows. That
    error is diagnostic only: nothing bounds it, and temporal content
    above the implied sampling rate aliases.
    """
    if plan.method != "subsample":
        raise UsageError(f"plan method is {plan.method!r}, not 'subsample'")
    n_s = rec.n_samples
    m = plan.rank_for(n_s)
    gen = plan.rng.generator()
    offset = int(gen.integers(0, n_s))
    indices = (offset + np.floor(np.arange(m) * (n_s / m)).astype(np.int64)) % n_s
    reduced = np.ascontiguousarray(rec.data[indices])
    _, sv, vt = np.linalg.svd(reduced, full_matrices=False)
    keep = sv > (sv[0] * 1e-12 if sv.size and sv[0] > 0 else np.inf)
    span = vt[keep]
    projected = (rec.data @ span.T) @ span
    residual = float(np.linalg.norm(rec.data - projected))
    return ReductionResult(
        method="subsample",
        m=m,
        basis=None,
        reduced=reduced,
        residual_fro=residual,
        record_id=rec.record_id,
    )


def reduce_record(rec: RecordMatrix, plan: ReductionPlan) -> ReductionResult:
    if plan.method == "exact_svd":
        return reduce_exact_svd(rec, plan.rank_for(rec.n_samples))
    if plan.method == "range_finder":
        return reduce_range_finder(rec, plan)
    return reduce_subsample(rec, plan)


def reduce_dataset(
    ds: Dataset, plan: ReductionPlan
) -> tuple[Dataset, list[ReductionResult]]:
    """Reduce every record independently; per-record streams are derived
    from the plan rng and the record id, so the outcome does not depend
    on record order (and per-record work could run concurrently).
    """
    results = []
    reduced_records = []
    for rec in ds.records:
        rec_plan = replace(plan, rng=plan.rng.derive(f"record/{rec.record_id}"))
        start = time.process_time_ns()
        try:
            result = reduce_record(rec, rec_plan)
        except TcdlError as exc:
            raise type(exc)(f"record {rec.record_id!r}: {exc}") from exc
        elapsed_ms = (time.process_time_ns() - start) / 1e6
        result = replace(result, elapsed_ms=elapsed_ms)
        results.append(result)
        reduced_records.append(
            RecordMatrix(data=result.reduced, record_id=rec.record_id)
        )
    return Dataset(records=tuple(reduced_records)), results
