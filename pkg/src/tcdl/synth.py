"""Synthetic multi-record data with known sparse structure.

Generates t records sharing one set of sparse spatial maps. Temporal
loadings are band-limited mixtures of sinusoids (random Fourier
coefficients on integer frequency bins), so their spectral content is
controlled exactly; a per-record perturbation of the coefficients
models between-record variability. Records are X^s = U^s V^T plus
optional white noise.

Band-limiting makes time-compression behavior predictable: projection
methods see a genuinely low-rank row space, while row subsampling
aliases any content above its implied sampling rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, RecordMatrix, RngSpec, _as_frozen_f64
from .errors import DimensionError, GenerationError, UsageError

__all__ = ["SynthConfig", "GroundTruth", "generate"]

# retries per map column when drawing supports under the overlap cap
_SUPPORT_TRIES = 1000


@dataclass(frozen=True)
class SynthConfig:
    p: int
    k_true: int
    t: int
    n_s: int
    sparsity: float = 0.05
    overlap: float = 0.1
    noise_sigma: float = 0.0
    loading_freq_range: tuple[float, float] = (1.0, 8.0)
    subject_jitter: float = 0.1
    rng: RngSpec = RngSpec(0)

    def __post_init__(self):
        if min(self.p, self.k_true, self.t, self.n_s) < 1:
            raise UsageError("p, k_true, t and n_s must all be positive")
        if not 0.0 < self.sparsity <= 1.0:
            raise UsageError(f"sparsity must be in (0, 1], got {self.sparsity}")
        if round(self.sparsity * self.p) < 1:
            raise UsageError(
                f"sparsity {self.sparsity} with p={self.p} leaves maps empty"
            )
        if not 0.0 <= self.overlap <= 1.0:
            raise UsageError(f"overlap must be in [0, 1], got {self.overlap}")
        if self.noise_sigma < 0 or self.subject_jitter < 0:
            raise UsageError("noise_sigma and subject_jitter must be nonnegative")
        f_lo, f_hi = self.loading_freq_range
        if not 0.0 <= f_lo <= f_hi:
            raise UsageError(
                f"need 0 <= f_lo <= f_hi, got ({f_lo}, {f_hi})"
            )
        if f_hi > self.n_s / 2:
            raise UsageError(
                f"f_hi = {f_hi} not representable with n_s = {self.n_s} samples"
            )

    @property
    def nnz_per_map(self) -> int:
        return int(round(self.sparsity * self.p))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """What the generator actually used: maps and per-record loadings."""

    true_maps: np.ndarray
    true_loadings: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "true_maps", _as_frozen_f64(self.true_maps, "true_maps")
        )
        object.__setattr__(
            self,
            "true_loadings",
            tuple(_as_frozen_f64(u, "true_loadings") for u in self.true_loadings),
        )
        k = self.true_maps.shape[1]
        for u in self.true_loadings:
            if u.shape[1] != k:
                raise DimensionError(
                    f"loadings have {u.shape[1]} columns for {k} maps"
                )


def _draw_supports(cfg: SynthConfig, gen: np.random.Generator) -> np.ndarray:
    """Index array (k_true x nnz) with pairwise overlap at most
    round(overlap * nnz) shared voxels per map pair.

    Rejection sampling from all voxels first (keeps supports exchangeable);
    when the cap is tight enough that rejection keeps missing, fall back
    to drawing from so-far-unused voxels, which satisfies any cap.
    """
    nnz = cfg.nnz_per_map
    max_shared = int(round(cfg.overlap * nnz))
    supports = np.empty((cfg.k_true, nnz), dtype=np.int64)
    masks = np.zeros((cfg.k_true, cfg.p), dtype=bool)
    for j in range(cfg.k_true):
        placed = False
        for _ in range(_SUPPORT_TRIES):
            cand = gen.choice(cfg.p, size=nnz, replace=False)
            mask = np.zeros(cfg.p, dtype=bool)
            mask[cand] = True
            shared = masks[:j] @ mask
            if j == 0 or shared.max() <= max_shared:
                placed = True
                break
        if not placed:
            unused = np.flatnonzero(~masks[:j].any(axis=0))
            if unused.size < nnz:
                raise GenerationError(
                    f"could not place map {j} within overlap {cfg.overlap} "
                    f"after {_SUPPORT_TRIES} tries and only {unused.size} "
                    f"unused voxels remain; relax overlap or sparsity"
                )
            cand = gen.choice(unused, size=nnz, replace=False)
            mask = np.zeros(cfg.p, dtype=bool)
            mask[cand] = True
        supports[j] = np.sort(cand)
        masks[j] = mask
    return supports


def _band_bins(cfg: SynthConfig) -> np.ndarray:
    lo = max(1, math.ceil(cfg.loading_freq_range[0]))
    hi = math.floor(cfg.loading_freq_range[1])
    bins = np.arange(lo, hi + 1)
    if bins.size == 0:
        raise GenerationError(
            f"no integer frequency bin inside {cfg.loading_freq_range}"
        )
    return bins


def _loadings_from_coeffs(coeffs: np.ndarray, bins: np.ndarray, n_s: int) -> np.ndarray:
    # coeffs: (len(bins), k) complex. Zero DC keeps signals zero-mean.
    spectrum = np.zeros((n_s // 2 + 1, coeffs.shape[1]), dtype=np.complex128)
    spectrum[bins] = coeffs
    u = np.fft.irfft(spectrum, n=n_s, axis=0)
    norms = np.linalg.norm(u, axis=0)
    if np.any(norms == 0.0):
        raise GenerationError("degenerate zero loading column")
    return u / norms


def generate(cfg: SynthConfig) -> tuple[Dataset, GroundTruth]:
    """Draw one dataset and its ground truth, deterministically in cfg.rng.

    Maps: supports by rejection under the overlap cap, values lognormal
    (positive-skewed; sign is irrelevant downstream since comparisons
    use absolute correlation). Loadings: shared band-limited Fourier
    coefficients per atom, perturbed per record by subject_jitter, unit
    column norms. Per-record randomness comes from streams derived from
    the record id, so records are independent of generation order.
    """
    map_gen = cfg.rng.derive("maps").generator()
    supports = _draw_supports(cfg, map_gen)
    true_maps = np.zeros((cfg.p, cfg.k_true))
    for j in range(cfg.k_true):
        true_maps[supports[j], j] = map_gen.lognormal(0.0, 0.5, cfg.nnz_per_map)

    bins = _band_bins(cfg)
    base_gen = cfg.rng.derive("loadings").generator()
    base = base_gen.standard_normal(
        (bins.size, cfg.k_true)
    ) + 1j * base_gen.standard_normal((bins.size, cfg.k_true))

    records = []
    loadings = []
    for s in range(cfg.t):
        record_id = f"rec{s:03d}"
        rec_gen = cfg.rng.derive(f"record/{record_id}").generator()
        jitter = rec_gen.standard_normal(
            (bins.size, cfg.k_true)
        ) + 1j * rec_gen.standard_normal((bins.size, cfg.k_true))
        coeffs = base + cfg.subject_jitter * jitter
        u = _loadings_from_coeffs(coeffs, bins, cfg.n_s)
        x = u @ true_maps.T
        if cfg.noise_sigma > 0:
            x = x + cfg.noise_sigma * rec_gen.standard_normal((cfg.n_s, cfg.p))
        records.append(RecordMatrix(data=x, record_id=record_id))
        loadings.append(u)

    ds = Dataset(records=tuple(records))
    truth = GroundTruth(true_maps=true_maps, true_loadings=tuple(loadings))
    return ds, truth
