"""Online sparse dictionary learning over voxel columns.

Solves min_{U, V} ||X - U V^T||_F^2 + lambda ||V||_1 with unit-ball
constraints on the columns of U (temporal atoms). Voxel columns stream
through in batches: each batch is sparse-coded against the current
dictionary, second-order surrogate statistics are accumulated, and the
dictionary takes one block coordinate descent cycle on the surrogate.
Spatial maps are extracted at the end by solving the Lasso once per
voxel against the final dictionary.

The solver never looks at row semantics, so it runs unchanged on raw
records (rows = time samples) or on reduced records (rows = compressed
coordinates); only the interpretation of U changes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Decomposition, RngSpec, concatenate
from .errors import DataError, DimensionError, NumericalError, UsageError

__all__ = [
    "DLConfig",
    "DLState",
    "FitInfo",
    "init_temporal_atoms",
    "lasso_code",
    "lasso_kkt_violation",
    "dictionary_update",
    "surrogate_objective",
    "factorization_objective",
    "fit",
    "fit_reduced",
]

# an atom whose surrogate curvature falls below this is dead: it was
# never (or no longer) used by any code and cannot be updated stably
DEAD_ATOM_EPS = 1e-12

# voxel columns per chunk when extracting final maps
_MAPS_CHUNK = 2048


@dataclass(frozen=True)
class DLConfig:
    """Solver settings. ``lam`` is the l1 penalty weight (written
    lambda elsewhere; the name avoids the Python keyword)."""

    k: int
    lam: float
    batch_size: int = 32
    epochs: int = 1
    lasso_tol: float = 1e-4
    lasso_max_iter: int = 1000
    dict_update_tol: float = 1e-8
    rng: RngSpec = RngSpec(0)
    init_maps: np.ndarray | None = None

    def __post_init__(self):
        if self.k < 1:
            raise UsageError(f"k must be positive, got {self.k}")
        if self.lam < 0:
            raise UsageError(f"lambda must be nonnegative, got {self.lam}")
        if self.batch_size < 1 or self.epochs < 1 or self.lasso_max_iter < 1:
            raise UsageError("batch_size, epochs and lasso_max_iter must be positive")
        if self.lasso_tol <= 0 or self.dict_update_tol <= 0:
            raise UsageError("tolerances must be positive")
        if self.init_maps is not None:
            maps = np.asarray(self.init_maps, dtype=np.float64)
            if maps.ndim != 2:
                raise DimensionError(
                    f"init_maps must be 2-d, got shape {maps.shape}"
                )
            if not np.all(np.isfinite(maps)):
                raise DataError("init_maps contains non-finite values")
            if maps.shape[1] != self.k:
                raise DimensionError(
                    f"init_maps has {maps.shape[1]} columns, config says k={self.k}"
                )
            object.__setattr__(self, "init_maps", maps)


@dataclass
class DLState:
    """Mutable online state: current dictionary and the surrogate
    statistics A = sum(v v^T), B = sum(x v^T) over all coded columns."""

    dictionary: np.ndarray
    a_stat: np.ndarray
    b_stat: np.ndarray
    columns_seen: int = 0
    dead_atom_events: int = 0


@dataclass(frozen=True)
class FitInfo:
    dead_atom_events: int
    dead_atoms_final: int
    lasso_nonconverged: int
    columns_seen: int
    warnings: tuple = ()
    epoch_objectives: tuple = ()


def init_temporal_atoms(x: np.ndarray, v_init: np.ndarray) -> np.ndarray:
    """Least-squares temporal atoms for given initial maps.

    Zero columns of v_init are dropped (their atoms would be
    unidentifiable), so the returned atom count can be smaller than
    v_init's column count. Rank-deficient maps fall back to the
    minimum-norm solution and raise a RuntimeWarning. Columns are
    projected onto the unit ball afterwards.
    """
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v_init, dtype=np.float64)
    if v.ndim != 2:
        raise DimensionError(f"init maps must be 2-d, got shape {v.shape}")
    if x.shape[1] != v.shape[0]:
        raise DimensionError(
            f"data has {x.shape[1]} columns but init maps have {v.shape[0]} rows"
        )
    keep = np.linalg.norm(v, axis=0) > 0
    if not np.any(keep):
        raise DataError("all init map columns are zero")
    v = v[:, keep]
    sv = np.linalg.svd(v, compute_uv=False)
    if sv[-1] <= sv[0] * 1e-12:
        warnings.warn(
            "init maps are rank deficient; atoms use the minimum-norm "
            "least-squares solution",
            RuntimeWarning,
            stacklevel=2,
        )
    u = np.linalg.lstsq(v, x.T, rcond=None)[0].T
    u /= np.maximum(1.0, np.linalg.norm(u, axis=0))
    return np.ascontiguousarray(u)


def _lasso_columns(u, xcols, lam, tol, max_iter):
    """Cyclic coordinate descent on the Gram formulation, vectorized
    across columns.

    Returns (codes (k x b), converged (b,)). The residual correlation
    r = U^T x - G v is maintained incrementally, which makes the KKT
    check after each sweep free. Columns are frozen as soon as their own
    KKT residual clears tol, so a column's code never depends on which
    other columns happen to share its batch.
    """
    g = u.T @ u
    c = u.T @ xcols
    k, b = c.shape
    diag = np.diag(g).copy()
    dead = diag <= 0.0
    half = 0.5 * lam
    v = np.zeros((k, b))
    r = c.copy()
    converged = np.zeros(b, dtype=bool)
    idx = np.arange(b)
    for _ in range(max_iter):
        rs = r[:, idx]
        vs = v[:, idx]
        for j in range(k):
            if dead[j]:
                continue
            rho = rs[j] + diag[j] * vs[j]
            vj = np.sign(rho) * np.maximum(np.abs(rho) - half, 0.0)
            vj /= diag[j]
            delta = vj - vs[j]
            if np.any(delta != 0.0):
                rs -= g[:, j, None] * delta
                vs[j] = vj
        # KKT: active coords need 2r = lam*sign(v), inactive |2r| <= lam
        viol = np.where(
            vs != 0.0, np.abs(2.0 * rs - lam * np.sign(vs)),
            np.abs(2.0 * rs) - lam,
        )
        ok = viol.max(axis=0) <= tol
        r[:, idx] = rs
        v[:, idx] = vs
        converged[idx] = ok
        if ok.all():
            break
        idx = idx[~ok]
    return v, converged


def lasso_code(x, u, lam, tol=1e-4, max_iter=1000, return_converged=False):
    """Sparse code of one column: argmin_v ||x - U v||^2 + lam ||v||_1.

    Requires unit-ball atom columns (callers maintain that). On hitting
    max_iter the current iterate is returned; pass return_converged to
    observe the flag.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    u = np.asarray(u, dtype=np.float64)
    if x.shape[0] != u.shape[0]:
        raise DimensionError(
            f"column has {x.shape[0]} rows but dictionary has {u.shape[0]}"
        )
    v, conv = _lasso_columns(u, x[:, None], lam, tol, max_iter)
    if return_converged:
        return v[:, 0], bool(conv[0])
    return v[:, 0]


def lasso_kkt_violation(x, u, v, lam) -> np.ndarray:
    """Max KKT residual per column for codes v (k x b) of columns x."""
    r = u.T @ x - (u.T @ u) @ v
    viol = np.where(
        v != 0.0, np.abs(2.0 * r - lam * np.sign(v)), np.abs(2.0 * r) - lam
    )
    return viol.max(axis=0)


def surrogate_objective(u, a_stat, b_stat) -> float:
    """Tr(U^T U A)/2 - Tr(U^T B), the quadratic surrogate the
    dictionary update descends."""
    return float(0.5 * np.sum((u @ a_stat) * u) - np.sum(u * b_stat))


def dictionary_update(state: DLState, cycles: int = 1, tol: float = 0.0):
    """Block coordinate descent on the surrogate, in place.

    Each atom moves to the surrogate minimizer given the others, then
    is projected onto the unit ball; that is the exact constrained
    coordinate minimizer, so the surrogate never increases. Atoms with
    near-zero curvature (never selected by any code) are skipped and
    counted. One cycle per call is the online default; more cycles with
    a stopping tol refine against fixed statistics.
    """
    u = state.dictionary
    a = state.a_stat
    b = state.b_stat
    diag = np.diag(a)
    k = u.shape[1]
    for _ in range(max(1, cycles)):
        max_move = 0.0
        for j in range(k):
            if diag[j] < DEAD_ATOM_EPS:
                state.dead_atom_events += 1
                continue
            new = u[:, j] + (b[:, j] - u @ a[:, j]) / diag[j]
            new /= max(1.0, float(np.linalg.norm(new)))
            max_move = max(max_move, float(np.max(np.abs(new - u[:, j]))))
            u[:, j] = new
        if max_move <= tol:
            break
    return u


def factorization_objective(x, u, maps, lam) -> float:
    """||X - U V^T||_F^2 + lam ||V||_1 with maps V given as p x k."""
    resid = x - u @ maps.T
    return float(np.sum(resid * resid) + lam * np.abs(maps).sum())


def _extract_maps(x, u, cfg):
    """Final Lasso over every voxel column, chunked; returns
    (maps p x k, objective, nonconverged count)."""
    rows, p = x.shape
    k = u.shape[1]
    codes = np.empty((k, p))
    loss = 0.0
    l1 = 0.0
    nonconverged = 0
    for start in range(0, p, _MAPS_CHUNK):
        cols = slice(start, min(start + _MAPS_CHUNK, p))
        vb, conv = _lasso_columns(
            u, x[:, cols], cfg.lam, cfg.lasso_tol, cfg.lasso_max_iter
        )
        codes[:, cols] = vb
        resid = x[:, cols] - u @ vb
        loss += float(np.sum(resid * resid))
        l1 += float(np.abs(vb).sum())
        nonconverged += int(conv.size - int(conv.sum()))
    return np.ascontiguousarray(codes.T), loss + cfg.lam * l1, nonconverged


def _check_surrogate_stats(a_stat):
    if not np.allclose(a_stat, a_stat.T, atol=1e-10):
        raise NumericalError("surrogate statistics lost symmetry")
    w = np.linalg.eigvalsh(0.5 * (a_stat + a_stat.T))
    floor = -1e-8 * max(1.0, float(w[-1]))
    if w[0] < floor:
        raise NumericalError(
            f"surrogate statistics not positive semidefinite (min eig {w[0]:.3e})"
        )


def fit(ds: Dataset, cfg: DLConfig, return_info: bool = False,
        track_objective: bool = False):
    """Run online dictionary learning on the concatenated dataset.

    Initialization comes from cfg.init_maps when given (least-squares
    atoms, zero map columns pruned) and otherwise from rng-seeded unit
    norm Gaussian columns. Each epoch streams all voxel columns in a
    fresh shuffled order. Deterministic in (ds, cfg).

    With return_info the FitInfo (dead atoms, lasso convergence,
    captured warnings, optional per-epoch objectives) is returned
    alongside the Decomposition. track_objective re-extracts full maps
    at every epoch boundary, which is expensive and meant for small
    instances.
    """
    x = concatenate(ds)
    rows, p = x.shape
    if rows < cfg.k:
        raise DimensionError(
            f"{rows} total rows cannot support k={cfg.k} atoms; "
            "after reduction m*t must exceed k"
        )

    captured = []
    if cfg.init_maps is not None:
        if cfg.init_maps.shape[0] != p:
            raise DimensionError(
                f"init_maps has {cfg.init_maps.shape[0]} rows, data has {p} voxels"
            )
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            u = init_temporal_atoms(x, cfg.init_maps)
        captured.extend(str(w.message) for w in caught)
    else:
        gen = cfg.rng.derive("init").generator()
        u = gen.standard_normal((rows, cfg.k))
        u /= np.linalg.norm(u, axis=0)
    k = u.shape[1]

    state = DLState(
        dictionary=u,
        a_stat=np.zeros((k, k)),
        b_stat=np.zeros((rows, k)),
    )
    stream = cfg.rng.derive("stream").generator()
    nonconverged = 0
    epoch_objectives = []
    batch_index = 0
    for _ in range(cfg.epochs):
        order = stream.permutation(p)
        for start in range(0, p, cfg.batch_size):
            cols = order[start:start + cfg.batch_size]
            xb = x[:, cols]
            vb, conv = _lasso_columns(
                u, xb, cfg.lam, cfg.lasso_tol, cfg.lasso_max_iter
            )
            nonconverged += int(conv.size - int(conv.sum()))
            state.a_stat += vb @ vb.T
            state.b_stat += xb @ vb.T
            dictionary_update(state)
            state.columns_seen += cols.size
            if not np.all(np.isfinite(u)):
                raise NumericalError(
                    f"non-finite dictionary entries after batch {batch_index}"
                )
            batch_index += 1
        _check_surrogate_stats(state.a_stat)
        if track_objective:
            _, obj, _ = _extract_maps(x, u, cfg)
            epoch_objectives.append(obj)

    maps, objective, final_nonconv = _extract_maps(x, u, cfg)
    nonconverged += final_nonconv
    if nonconverged:
        captured.append(
            f"{nonconverged} lasso solves stopped at max_iter before "
            f"reaching tol={cfg.lasso_tol}"
        )
    decomp = Decomposition(
        temporal_atoms=u,
        spatial_maps=maps,
        lam=cfg.lam,
        objective_value=objective,
        record_rows=ds.row_counts,
    )
    if not return_info:
        return decomp
    diag = np.diag(state.a_stat)
    info = FitInfo(
        dead_atom_events=state.dead_atom_events,
        dead_atoms_final=int(np.sum(diag < DEAD_ATOM_EPS)),
        lasso_nonconverged=nonconverged,
        columns_seen=state.columns_seen,
        warnings=tuple(captured),
        epoch_objectives=tuple(epoch_objectives),
    )
    return decomp, info


def fit_reduced(ds_r: Dataset, cfg: DLConfig, return_info: bool = False,
                track_objective: bool = False):
    """Fit on a reduced dataset.

    Mechanically identical to fit; rows are compressed coordinates, so
    the learned atoms live in reduced space (m*t rows) while the maps
    stay in voxel space and remain comparable across reductions. The
    row-count precondition is the m*t > k requirement.
    """
    return fit(ds_r, cfg, return_info=return_info, track_objective=track_objective)
