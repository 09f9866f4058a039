"""Permutation-invariant comparison of spatial map sets.

Sparse factorizations are identifiable only up to column order and
sign, so map sets are compared through absolute cosine similarity and
an optimal one-to-one assignment. The single-pair metric d is the mean
correlation over the best assignment; the multi-run metric d_l applies
d to column-wise concatenations of several runs, which smooths over the
local minima that any single run lands in.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .data import _as_frozen_f64
from .errors import DimensionError, UsageError

__all__ = [
    "MapSet",
    "Matching",
    "corr",
    "match_maps",
    "concat_map_sets",
    "d_l",
    "median_matched_pair",
]


@dataclass(frozen=True, eq=False)
class MapSet:
    """A p x q matrix whose columns are spatial maps.

    Zero columns are legal (dead atoms); any correlation involving one
    is 0 by convention. ``run_labels`` ties each column to the run it
    came from and defaults to empty labels.
    """

    maps: np.ndarray
    run_labels: tuple = field(default=())

    def __post_init__(self):
        maps = _as_frozen_f64(self.maps, "maps")
        if maps.ndim != 2:
            raise DimensionError(f"maps must be 2-d, got shape {maps.shape}")
        object.__setattr__(self, "maps", maps)
        labels = tuple(self.run_labels)
        if not labels:
            labels = ("",) * maps.shape[1]
        if len(labels) != maps.shape[1]:
            raise DimensionError(
                f"{len(labels)} run labels for {maps.shape[1]} map columns"
            )
        object.__setattr__(self, "run_labels", labels)

    @property
    def p(self) -> int:
        return self.maps.shape[0]

    @property
    def q(self) -> int:
        return self.maps.shape[1]


@dataclass(frozen=True)
class Matching:
    """Optimal one-to-one assignment between two map sets.

    ``pairs`` holds (i, j, corr) triples, a partial permutation of size
    min(q0, q); surplus columns on the larger side stay unmatched and
    do not enter ``mean_corr``.
    """

    pairs: tuple
    mean_corr: float

    def __post_init__(self):
        left = [i for i, _, _ in self.pairs]
        right = [j for _, j, _ in self.pairs]
        if len(set(left)) != len(left) or len(set(right)) != len(right):
            raise ValueError("pairs must use each source and target index at most once")

    @property
    def corrs(self) -> np.ndarray:
        return np.array([c for _, _, c in self.pairs])


def corr(v0: np.ndarray, v: np.ndarray) -> float:
    """Absolute cosine similarity in [0, 1]; 0 if either vector is zero.

    The absolute value absorbs the sign indeterminacy of factorization
    models.
    """
    v0 = np.asarray(v0, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if v0.shape != v.shape:
        raise DimensionError(
            f"column length mismatch: {v0.shape[0]} vs {v.shape[0]}"
        )
    n0 = np.linalg.norm(v0)
    n1 = np.linalg.norm(v)
    if n0 == 0.0 or n1 == 0.0:
        return 0.0
    return float(min(1.0, abs(v0 @ v) / (n0 * n1)))


def _corr_matrix(a: MapSet, b: MapSet) -> np.ndarray:
    # Normalize columns, mapping zero columns to zero so their row or
    # column of correlations vanishes.
    def unit(m):
        norms = np.linalg.norm(m, axis=0)
        safe = np.where(norms == 0.0, 1.0, norms)
        return m / safe

    c = np.abs(unit(a.maps).T @ unit(b.maps))
    return np.minimum(c, 1.0)


def match_maps(a: MapSet, b: MapSet) -> Matching:
    """Maximum-weight one-to-one assignment under absolute correlation.

    Solves the assignment exactly (Jonker-Volgenant, handles
    rectangular inputs); mean_corr averages over the matched pairs
    only.
    """
    if a.p != b.p:
        raise DimensionError(f"map length mismatch: {a.p} vs {b.p}")
    cost = _corr_matrix(a, b)
    rows, cols = linear_sum_assignment(cost, maximize=True)
    pairs = tuple(
        (int(i), int(j), float(cost[i, j])) for i, j in zip(rows, cols)
    )
    mean = float(np.mean([c for _, _, c in pairs]))
    return Matching(pairs=pairs, mean_corr=mean)


def concat_map_sets(sets) -> MapSet:
    """Column-wise concatenation of several map sets into one."""
    sets = list(sets)
    if not sets:
        raise UsageError("cannot concatenate an empty list of map sets")
    p = sets[0].p
    for s in sets:
        if s.p != p:
            raise DimensionError(f"map length mismatch: {s.p} vs {p}")
    maps = np.hstack([s.maps for s in sets])
    labels = tuple(lab for s in sets for lab in s.run_labels)
    return MapSet(maps=maps, run_labels=labels)


def d_l(reference_runs, candidate_runs) -> tuple[float, float | None]:
    """Concatenated multi-run correspondence metric.

    Concatenates each run list column-wise and returns the mean matched
    correlation between the two concatenations. With at least 4
    reference runs a dispersion is estimated as the standard deviation
    of the metric across leave-one-out regroupings of the reference
    list; otherwise dispersion is None.
    """
    reference_runs = list(reference_runs)
    candidate_runs = list(candidate_runs)
    if not reference_runs or not candidate_runs:
        raise UsageError("reference and candidate run lists must be nonempty")
    ref = concat_map_sets(reference_runs)
    cand = concat_map_sets(candidate_runs)
    value = match_maps(ref, cand).mean_corr
    dispersion = None
    if len(reference_runs) >= 4:
        resampled = []
        for drop in range(len(reference_runs)):
            subset = [s for i, s in enumerate(reference_runs) if i != drop]
            resampled.append(match_maps(concat_map_sets(subset), cand).mean_corr)
        dispersion = float(np.std(resampled, ddof=1))
    return value, dispersion


def median_matched_pair(a: MapSet, b: MapSet) -> tuple[int, int, float]:
    """The matched pair at the (lower) median correlation.

    Typical use: pick one representative pair to inspect, avoiding
    both cherry-picked best and worst cases.
    """
    matching = match_maps(a, b)
    ordered = sorted(matching.pairs, key=lambda pair: pair[2])
    return ordered[(len(ordered) - 1) // 2]
