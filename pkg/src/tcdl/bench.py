"""Experiment orchestration over reduce + fit + compare.

An experiment is described by a JSON spec (see load_experiment_spec)
and produces, under one output directory:

* ``runs/`` persisted fit runs (atoms.tcdm, maps.tcdm, run.json per run);
* ``tradeoff.csv`` one row per candidate reduction (and one for the
  full-data baseline arm): the lambda picked from the grid by maximal
  d_l against the reference, the d_l value and its dispersion;
* ``stabilization.csv`` d_l versus l curves per arm;
* ``timings.json`` process-CPU milliseconds, reduction and dictionary
  learning kept separate.

CPU timings are measured with process clocks inside whichever process
runs the fit, so they exclude file I/O and are meaningful under worker
parallelism. Timings never enter the CSVs: given fixed seeds the CSVs
reproduce byte-exactly, timings do not.

Dispersion here follows the result-set axis: d_l is recomputed over up
to 4 sliding windows of the reference run list and the standard
deviation across windows is reported. Resampling records instead of
result sets is a documented variant ("dispersion_axis") that this
version does not implement.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .correspondence import MapSet, d_l
from .data import Dataset, RngSpec
from .dictlearn import DLConfig, fit
from .errors import FormatError, UsageError
from .io import read_dataset, write_csv, write_matrix
from .reduction import METHODS, ReductionPlan, reduce_dataset

__all__ = [
    "ReferenceArm",
    "BaselineArm",
    "CandidateArm",
    "ExperimentSpec",
    "TradeoffPoint",
    "load_experiment_spec",
    "default_lambda_grid",
    "run_reference",
    "run_tradeoff",
    "run_stabilization",
    "run_experiment",
]

_METHOD_ALIASES = {
    "svd": "exact_svd",
    "rf": "range_finder",
    "ss": "subsample",
}

_DL_OPTION_KEYS = (
    "batch_size",
    "epochs",
    "lasso_tol",
    "lasso_max_iter",
    "dict_update_tol",
)

# reference-window resamplings used for dispersion estimates
_MAX_DISPERSION_GROUPS = 4


@dataclass(frozen=True)
class ReferenceArm:
    lam: float
    seeds: tuple

    @property
    def n_runs(self) -> int:
        return len(self.seeds)


@dataclass(frozen=True)
class BaselineArm:
    seeds: tuple

    @property
    def n_runs(self) -> int:
        return len(self.seeds)


@dataclass(frozen=True)
class CandidateArm:
    name: str
    method: str
    m: int | None
    alpha: float | None
    seeds: tuple
    lambda_grid: tuple | None = None
    oversample: int = 10
    power_iters: int = 1
    reduce_seed: int | None = None

    @property
    def n_runs(self) -> int:
        return len(self.seeds)

    def plan(self) -> ReductionPlan:
        seed = self.reduce_seed if self.reduce_seed is not None else self.seeds[0]
        return ReductionPlan(
            method=self.method,
            m=self.m,
            alpha=self.alpha,
            oversample=self.oversample,
            power_iters=self.power_iters,
            rng=RngSpec(seed, "reduce"),
        )


@dataclass(frozen=True)
class ExperimentSpec:
    dataset_path: str
    k: int
    reference: ReferenceArm
    candidates: tuple
    l_tradeoff: int
    l_values: tuple = ()
    baseline: BaselineArm | None = None
    dl_options: dict | None = None
    dispersion_axis: str = "result_set"
    output_dir: str | None = None


@dataclass(frozen=True)
class TradeoffPoint:
    """One candidate's accuracy/cost summary. CPU times are process
    compute milliseconds, I/O excluded; cpu_time_dl_ms sums every fit
    the candidate required (all grid lambdas, all seeds)."""

    name: str
    method: str
    alpha: float | None
    m: int | None
    lambda_best: float
    d_l_value: float
    d_l_dispersion: float | None
    cpu_time_reduce_ms: float
    cpu_time_dl_ms: float


@dataclass(frozen=True)
class _RunResult:
    seed: int
    lam: float
    atoms: np.ndarray
    maps: np.ndarray
    objective: float
    dead_atoms: int
    nonconverged: int
    warnings: tuple
    cpu_ms: float


def _require(cond: bool, message: str):
    if not cond:
        raise UsageError(message)


def _int_list(value, what: str) -> tuple:
    _require(isinstance(value, list) and value, f"{what} must be a nonempty list")
    out = []
    for v in value:
        _require(isinstance(v, int) and not isinstance(v, bool), f"{what} must hold integers")
        out.append(v)
    return tuple(out)


def _parse_reference(obj) -> ReferenceArm:
    _require(isinstance(obj, dict), "reference must be an object")
    unknown = set(obj) - {"lambda", "n_runs", "seeds"}
    _require(not unknown, f"unknown reference keys: {sorted(unknown)}")
    _require("lambda" in obj and "seeds" in obj, "reference needs lambda and seeds")
    lam = float(obj["lambda"])
    _require(lam >= 0, "reference lambda must be nonnegative")
    seeds = _int_list(obj["seeds"], "reference.seeds")
    if "n_runs" in obj:
        _require(
            obj["n_runs"] == len(seeds),
            f"reference.n_runs = {obj['n_runs']} but {len(seeds)} seeds given",
        )
    return ReferenceArm(lam=lam, seeds=seeds)


def _parse_candidate(obj, index: int) -> CandidateArm:
    _require(isinstance(obj, dict), f"candidates[{index}] must be an object")
    allowed = {
        "name", "method", "m", "alpha", "seeds", "n_runs",
        "lambda_grid", "oversample", "power_iters", "reduce_seed",
    }
    unknown = set(obj) - allowed
    _require(not unknown, f"unknown candidate keys: {sorted(unknown)}")
    _require("method" in obj and "seeds" in obj, f"candidates[{index}] needs method and seeds")
    method = _METHOD_ALIASES.get(obj["method"], obj["method"])
    _require(method in METHODS, f"candidates[{index}]: unknown method {obj['method']!r}")
    m = obj.get("m")
    alpha = obj.get("alpha")
    _require(
        (m is None) != (alpha is None),
        f"candidates[{index}] needs exactly one of m and alpha",
    )
    seeds = _int_list(obj["seeds"], f"candidates[{index}].seeds")
    if "n_runs" in obj:
        _require(
            obj["n_runs"] == len(seeds),
            f"candidates[{index}].n_runs disagrees with its seed count",
        )
    grid = obj.get("lambda_grid")
    if grid is not None:
        _require(isinstance(grid, list) and grid, f"candidates[{index}].lambda_grid must be a nonempty list")
        grid = tuple(float(g) for g in grid)
        _require(all(g >= 0 for g in grid), f"candidates[{index}].lambda_grid must be nonnegative")
    if alpha is not None:
        tag = f"a{alpha:g}"
    else:
        tag = f"m{m}"
    name = obj.get("name", f"{method}_{tag}")
    return CandidateArm(
        name=str(name),
        method=method,
        m=None if m is None else int(m),
        alpha=None if alpha is None else float(alpha),
        seeds=seeds,
        lambda_grid=grid,
        oversample=int(obj.get("oversample", 10)),
        power_iters=int(obj.get("power_iters", 1)),
        reduce_seed=obj.get("reduce_seed"),
    )


def load_experiment_spec(path, output_override: str | None = None) -> ExperimentSpec:
    """Parse and validate an experiment JSON file.

    Schema (keys marked * are required):
      dataset*         path to a dataset container, relative to the spec file
      k*               atom count for every fit
      reference*       {lambda*, seeds*, n_runs}
      candidates*      [{method*, seeds*, m xor alpha*, lambda_grid,
                         oversample, power_iters, reduce_seed, name, n_runs}]
      baseline         {seeds*, n_runs}: full-data self-correspondence arm
      l                runs concatenated per side in tradeoff d_l
                       (default: largest value every arm supports)
      l_values         list of l for stabilization curves (default none)
      dl               solver overrides: batch_size, epochs, lasso_tol,
                       lasso_max_iter, dict_update_tol
      dispersion_axis  "result_set" (only implemented axis)
      output           default output directory

    Reference seeds must be disjoint from candidate and baseline seeds:
    the metric compares result sets, which is vacuous on identical runs.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read experiment spec {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"experiment spec {path} is not valid JSON: {exc}") from exc
    _require(isinstance(obj, dict), "experiment spec must be a JSON object")
    allowed = {
        "dataset", "k", "reference", "candidates", "baseline",
        "l", "l_values", "dl", "dispersion_axis", "output",
    }
    unknown = set(obj) - allowed
    _require(not unknown, f"unknown experiment keys: {sorted(unknown)}")
    for key in ("dataset", "k", "reference", "candidates"):
        _require(key in obj, f"experiment spec is missing {key!r}")

    k = obj["k"]
    _require(isinstance(k, int) and k >= 1, "k must be a positive integer")
    reference = _parse_reference(obj["reference"])
    _require(isinstance(obj["candidates"], list) and obj["candidates"],
             "candidates must be a nonempty list")
    candidates = tuple(
        _parse_candidate(c, i) for i, c in enumerate(obj["candidates"])
    )
    names = [c.name for c in candidates]
    _require(len(set(names)) == len(names), f"duplicate candidate names: {names}")

    baseline = None
    if "baseline" in obj:
        b = obj["baseline"]
        _require(isinstance(b, dict), "baseline must be an object")
        unknown = set(b) - {"seeds", "n_runs"}
        _require(not unknown, f"unknown baseline keys: {sorted(unknown)}")
        _require("seeds" in b, "baseline needs seeds")
        seeds = _int_list(b["seeds"], "baseline.seeds")
        if "n_runs" in b:
            _require(b["n_runs"] == len(seeds), "baseline.n_runs disagrees with its seed count")
        baseline = BaselineArm(seeds=seeds)

    ref_seeds = set(reference.seeds)
    for cand in candidates:
        clash = ref_seeds & set(cand.seeds)
        _require(not clash, f"candidate {cand.name!r} reuses reference seeds {sorted(clash)}")
    if baseline is not None:
        clash = ref_seeds & set(baseline.seeds)
        _require(not clash, f"baseline reuses reference seeds {sorted(clash)}")

    arm_runs = [c.n_runs for c in candidates]
    if baseline is not None:
        arm_runs.append(baseline.n_runs)
    max_l = min([reference.n_runs] + arm_runs)
    l_tradeoff = obj.get("l", max_l)
    _require(isinstance(l_tradeoff, int) and l_tradeoff >= 1, "l must be a positive integer")
    _require(
        l_tradeoff <= max_l,
        f"l = {l_tradeoff} but the smallest arm has only {max_l} runs",
    )

    l_values = ()
    if "l_values" in obj:
        l_values = _int_list(obj["l_values"], "l_values")
        _require(all(v >= 1 for v in l_values), "l_values must be positive")

    dl_options = None
    if "dl" in obj:
        dl = obj["dl"]
        _require(isinstance(dl, dict), "dl must be an object")
        unknown = set(dl) - set(_DL_OPTION_KEYS)
        _require(not unknown, f"unknown dl keys: {sorted(unknown)}")
        dl_options = dict(dl)

    axis = obj.get("dispersion_axis", "result_set")
    if axis == "record_resampling":
        raise UsageError(
            "dispersion_axis 'record_resampling' is documented but not "
            "implemented in this version; use 'result_set'"
        )
    _require(axis == "result_set", f"unknown dispersion_axis {axis!r}")

    dataset_path = obj["dataset"]
    _require(isinstance(dataset_path, str) and dataset_path, "dataset must be a path")
    dataset_path = str((path.parent / dataset_path).resolve())

    output = output_override if output_override is not None else obj.get("output")
    return ExperimentSpec(
        dataset_path=dataset_path,
        k=k,
        reference=reference,
        candidates=candidates,
        l_tradeoff=l_tradeoff,
        l_values=l_values,
        baseline=baseline,
        dl_options=dl_options,
        dispersion_axis=axis,
        output_dir=output,
    )


def default_lambda_grid(lam_ref: float, row_ratio: float, points: int = 7):
    """Log grid, one decade wide with ``points`` points, centered on the
    reference lambda rescaled by the kept row fraction (the quadratic
    loss shrinks with row count, so matching sparsity needs a smaller
    penalty after reduction)."""
    center = lam_ref * row_ratio
    if center <= 0:
        return (0.0,)
    return tuple(float(v) for v in center * 10.0 ** np.linspace(-0.5, 0.5, points))


def _dl_config(spec: ExperimentSpec, lam: float, seed: int) -> DLConfig:
    opts = spec.dl_options or {}
    return DLConfig(k=spec.k, lam=lam, rng=RngSpec(seed), **opts)


def _run_one_fit(ds: Dataset, spec: ExperimentSpec, lam: float, seed: int) -> _RunResult:
    cfg = _dl_config(spec, lam, seed)
    start = time.process_time_ns()
    decomp, info = fit(ds, cfg, return_info=True)
    cpu_ms = (time.process_time_ns() - start) / 1e6
    return _RunResult(
        seed=seed,
        lam=lam,
        atoms=decomp.temporal_atoms,
        maps=decomp.spatial_maps,
        objective=decomp.objective_value,
        dead_atoms=info.dead_atoms_final,
        nonconverged=info.lasso_nonconverged,
        warnings=info.warnings,
        cpu_ms=cpu_ms,
    )


_WORKER_DS: Dataset | None = None
_WORKER_SPEC: ExperimentSpec | None = None


def _init_worker(ds: Dataset, spec: ExperimentSpec):
    global _WORKER_DS, _WORKER_SPEC
    _WORKER_DS = ds
    _WORKER_SPEC = spec


def _worker_fit(job):
    lam, seed = job
    return _run_one_fit(_WORKER_DS, _WORKER_SPEC, lam, seed)


def _run_fits(ds: Dataset, spec: ExperimentSpec, jobs, workers: int):
    """Run (lambda, seed) fit jobs; returns results keyed by job in the
    given order regardless of scheduling."""
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [_run_one_fit(ds, spec, lam, seed) for lam, seed in jobs]
    with ProcessPoolExecutor(
        max_workers=min(workers, len(jobs)),
        initializer=_init_worker,
        initargs=(ds, spec),
    ) as pool:
        return list(pool.map(_worker_fit, jobs))


def _persist_run(run_dir: Path, spec: ExperimentSpec, result: _RunResult):
    run_dir.mkdir(parents=True, exist_ok=True)
    write_matrix(result.atoms, run_dir / "atoms.tcdm")
    write_matrix(result.maps, run_dir / "maps.tcdm")
    meta = {
        "seed": result.seed,
        "lambda": result.lam,
        "k": spec.k,
        "objective": result.objective,
        "dead_atoms": result.dead_atoms,
        "lasso_nonconverged": result.nonconverged,
        "warnings": list(result.warnings),
    }
    (run_dir / "run.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _map_set(result: _RunResult) -> MapSet:
    labels = (f"seed{result.seed}",) * result.maps.shape[1]
    return MapSet(result.maps, run_labels=labels)


def _windows(sets, l):
    count = min(_MAX_DISPERSION_GROUPS, len(sets) - l + 1)
    return [sets[i:i + l] for i in range(count)]


def _dl_against_reference(ref_sets, cand_sets, l):
    """d_l of cand_sets against the first reference window, plus the
    standard deviation across sliding reference windows (None when only
    one window fits)."""
    windows = _windows(ref_sets, l)
    values = [d_l(w, cand_sets)[0] for w in windows]
    dispersion = float(np.std(values, ddof=1)) if len(values) >= 2 else None
    return values[0], dispersion


def run_reference(spec: ExperimentSpec, ds: Dataset, out_dir: Path, workers: int = 1):
    """Fit the reference arm (full data, lambda_ref, one run per seed)
    and persist each run under runs/reference/."""
    jobs = [(spec.reference.lam, seed) for seed in spec.reference.seeds]
    results = _run_fits(ds, spec, jobs, workers)
    for result in results:
        _persist_run(out_dir / "runs" / "reference" / f"seed_{result.seed}", spec, result)
    return results


def run_tradeoff(spec: ExperimentSpec, ds: Dataset, ref_results, out_dir: Path,
                 workers: int = 1):
    """Tradeoff protocol: per candidate, reduce (timed), fit across the
    lambda grid (timed), keep the lambda with maximal d_l against the
    reference, persist the winning runs. The baseline arm (more full
    data runs) gives the self-correspondence stripe that reduced arms
    are judged against.

    Returns (points, arm_results) where arm_results maps arm name to
    the per-run results retained for stabilization.
    """
    ref_sets = [_map_set(r) for r in ref_results]
    l = spec.l_tradeoff
    points = []
    arm_results = {}

    if spec.baseline is not None:
        jobs = [(spec.reference.lam, seed) for seed in spec.baseline.seeds]
        results = _run_fits(ds, spec, jobs, workers)
        for result in results:
            _persist_run(out_dir / "runs" / "baseline" / f"seed_{result.seed}", spec, result)
        value, dispersion = _dl_against_reference(
            ref_sets, [_map_set(r) for r in results], l
        )
        points.append(TradeoffPoint(
            name="baseline",
            method="baseline",
            alpha=1.0,
            m=None,
            lambda_best=spec.reference.lam,
            d_l_value=value,
            d_l_dispersion=dispersion,
            cpu_time_reduce_ms=0.0,
            cpu_time_dl_ms=float(sum(r.cpu_ms for r in results)),
        ))
        arm_results["baseline"] = results

    full_rows = ds.total_rows
    for cand in spec.candidates:
        start = time.process_time_ns()
        ds_r, _ = reduce_dataset(ds, cand.plan())
        reduce_ms = (time.process_time_ns() - start) / 1e6

        grid = cand.lambda_grid
        if grid is None:
            grid = default_lambda_grid(spec.reference.lam, ds_r.total_rows / full_rows)
        jobs = [(lam, seed) for lam in grid for seed in cand.seeds]
        results = _run_fits(ds_r, spec, jobs, workers)
        dl_ms = float(sum(r.cpu_ms for r in results))

        by_lam = {lam: [] for lam in grid}
        for result in results:
            by_lam[result.lam].append(result)
        scores = []
        for lam in grid:
            value, _ = _dl_against_reference(
                ref_sets, [_map_set(r) for r in by_lam[lam]], l
            )
            scores.append(value)
        best_idx = int(np.argmax(scores))
        lam_best = grid[best_idx]
        best_runs = by_lam[lam_best]
        value, dispersion = _dl_against_reference(
            ref_sets, [_map_set(r) for r in best_runs], l
        )
        for result in best_runs:
            _persist_run(out_dir / "runs" / cand.name / f"seed_{result.seed}", spec, result)
        points.append(TradeoffPoint(
            name=cand.name,
            method=cand.method,
            alpha=cand.alpha,
            m=cand.m,
            lambda_best=float(lam_best),
            d_l_value=value,
            d_l_dispersion=dispersion,
            cpu_time_reduce_ms=reduce_ms,
            cpu_time_dl_ms=dl_ms,
        ))
        arm_results[cand.name] = best_runs
    return points, arm_results


def run_stabilization(spec: ExperimentSpec, ref_results, arm_results):
    """d_l versus l for every arm: rows (arm, l, d_l_value, dispersion).

    Each arm needs at least max(l_values) runs, as does the reference.
    """
    if not spec.l_values:
        return []
    need = max(spec.l_values)
    if spec.reference.n_runs < need:
        raise UsageError(
            f"stabilization needs {need} reference runs, spec provides "
            f"{spec.reference.n_runs}"
        )
    for name, results in arm_results.items():
        if len(results) < need:
            raise UsageError(
                f"stabilization needs {need} runs per arm, arm {name!r} "
                f"has {len(results)}"
            )
    ref_sets = [_map_set(r) for r in ref_results]
    rows = []
    for name in arm_results:
        cand_sets = [_map_set(r) for r in arm_results[name]]
        for l in spec.l_values:
            value, dispersion = _dl_against_reference(ref_sets, cand_sets[:l], l)
            rows.append((name, l, value, dispersion))
    return rows


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> dict:
    """Run the full protocol and write tradeoff.csv, stabilization.csv,
    timings.json and the runs/ tree under spec.output_dir."""
    if not spec.output_dir:
        raise UsageError("experiment spec has no output directory")
    out_dir = Path(spec.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = read_dataset(spec.dataset_path)

    ref_results = run_reference(spec, ds, out_dir, workers)
    points, arm_results = run_tradeoff(spec, ds, ref_results, out_dir, workers)

    write_csv(
        out_dir / "tradeoff.csv",
        ["name", "method", "alpha", "m", "lambda_best", "d_l_value", "d_l_dispersion"],
        [
            (p.name, p.method, p.alpha, p.m, p.lambda_best, p.d_l_value, p.d_l_dispersion)
            for p in points
        ],
    )

    stab_rows = run_stabilization(spec, ref_results, arm_results)
    if stab_rows:
        write_csv(
            out_dir / "stabilization.csv",
            ["arm", "l", "d_l_value", "d_l_dispersion"],
            stab_rows,
        )

    timings = {
        "reference": {"cpu_time_dl_ms": float(sum(r.cpu_ms for r in ref_results))},
        "arms": {
            p.name: {
                "cpu_time_reduce_ms": p.cpu_time_reduce_ms,
                "cpu_time_dl_ms": p.cpu_time_dl_ms,
            }
            for p in points
        },
    }
    (out_dir / "timings.json").write_text(
        json.dumps(timings, indent=2, sort_keys=True) + "\n"
    )
    return {
        "output_dir": str(out_dir),
        "tradeoff": points,
        "stabilization": stab_rows,
        "timings": timings,
        "n_reference_runs": len(ref_results),
    }
