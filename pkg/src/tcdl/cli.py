"""Command-line entry point.

Subcommands mirror the pipeline stages: synth, reduce, decompose,
compare, bench. Exit codes: 0 success, 1 usage error, 2 data or format
error, 3 numerical failure. Usage errors are reported before anything
is written, so they never leave partial outputs.

Every invocation that writes outputs also records machine-readable
metadata (command line, resolved config, library versions, seeds,
elapsed wall time per phase, warnings): directory outputs get
``run.json`` inside the directory, file outputs get a ``<output>.run.json``
sibling. Re-running the echoed config reproduces the data outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bench import load_experiment_spec, run_experiment
from .correspondence import MapSet, concat_map_sets, d_l, match_maps
from .data import RngSpec
from .dictlearn import DLConfig, fit
from .errors import DataError, NumericalError, UsageError
from .io import read_dataset, read_matrix, write_csv, write_dataset, write_matrix
from .reduction import ReductionPlan, reduce_dataset
from .synth import SynthConfig, generate

_METHOD_FLAGS = {"svd": "exact_svd", "rf": "range_finder", "ss": "subsample"}


class _Parser(argparse.ArgumentParser):
    # argparse wants to sys.exit(2) on bad flags; route through the
    # usage-error contract instead
    def error(self, message):
        raise UsageError(message)


def _versions() -> dict:
    return {
        "tcdl": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _write_run_json(path: Path, command: str, subcommand: str, config: dict,
                    seeds, elapsed: dict, warnings=(), extra: dict | None = None):
    meta = {
        "command": command,
        "subcommand": subcommand,
        "config": config,
        "versions": _versions(),
        "seeds": list(seeds),
        "elapsed_ms": elapsed,
        "warnings": list(warnings),
    }
    if extra:
        meta.update(extra)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _parse_freq(text: str) -> tuple[float, float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise UsageError(f"--freq expects LO:HI, got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise UsageError(f"--freq expects numbers, got {text!r}") from exc


def _default_workers() -> int:
    raw = os.environ.get("TCDL_WORKERS", "1")
    try:
        workers = int(raw)
    except ValueError as exc:
        raise UsageError(f"TCDL_WORKERS must be an integer, got {raw!r}") from exc
    return workers


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="tcdl",
        description="time-compressed dictionary learning pipeline",
    )
    parser.add_argument("--version", action="version", version=f"tcdl {__version__}")
    sub = parser.add_subparsers(
        dest="subcommand",
        required=True,
        metavar="{synth,reduce,decompose,compare,bench}",
    )

    p = sub.add_parser("synth", parents=[], description="generate synthetic ground-truth data")
    p.add_argument("--p", type=int, required=True, help="voxels (columns)")
    p.add_argument("--k", type=int, required=True, help="ground-truth atom count")
    p.add_argument("--t", type=int, required=True, help="record count")
    p.add_argument("--n", type=int, required=True, help="samples per record")
    p.add_argument("--sparsity", type=float, default=0.05)
    p.add_argument("--overlap", type=float, default=0.1)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--freq", type=str, default="1:8", help="loading band LO:HI, cycles per record")
    p.add_argument("--jitter", type=float, default=0.1, help="per-record loading perturbation scale")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", type=str, required=True, help="dataset file to write")
    p.add_argument("--truth", type=str, required=True, help="directory for ground-truth matrices")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("reduce", description="per-record time compression")
    p.add_argument("--input", type=str, required=True)
    p.add_argument("--method", type=str, required=True, choices=sorted(_METHOD_FLAGS))
    size = p.add_mutually_exclusive_group(required=True)
    size.add_argument("--m", type=int, help="rows to keep per record")
    size.add_argument("--alpha", type=float, help="fraction of rows to keep")
    p.add_argument("--oversample", type=int, default=10)
    p.add_argument("--power-iters", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", type=str, required=True, help="reduced dataset file")
    p.add_argument("--report", type=str, required=True, help="per-record CSV report")
    p.add_argument("--no-plot", action="store_true", help="skip rendering report figure")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("decompose", description="online sparse dictionary learning")
    p.add_argument("--input", type=str, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--init", type=str, help="initial maps matrix file")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", type=str, required=True, help="output directory")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("compare", description="correspondence between two groups of runs")
    p.add_argument("--reference", type=str, required=True,
                   help="comma-separated run directories")
    p.add_argument("--candidate", type=str, required=True,
                   help="comma-separated run directories")
    p.add_argument("--output", type=str, required=True, help="CSV to write")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", description="run a full experiment spec")
    p.add_argument("--spec", type=str, required=True, help="experiment JSON")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel fit processes (default: TCDL_WORKERS or 1)")
    p.add_argument("--output", type=str, help="output directory (overrides spec)")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_bench)
    return parser


def cmd_synth(args, command: str):
    cfg = SynthConfig(
        p=args.p,
        k_true=args.k,
        t=args.t,
        n_s=args.n,
        sparsity=args.sparsity,
        overlap=args.overlap,
        noise_sigma=args.noise,
        loading_freq_range=_parse_freq(args.freq),
        subject_jitter=args.jitter,
        rng=RngSpec(args.seed),
    )
    t0 = time.perf_counter()
    ds, truth = generate(cfg)
    t1 = time.perf_counter()
    out = Path(args.output)
    truth_dir = Path(args.truth)
    write_dataset(ds, out)
    truth_dir.mkdir(parents=True, exist_ok=True)
    write_matrix(truth.true_maps, truth_dir / "true_maps.tcdm")
    loadings_dir = truth_dir / "loadings"
    loadings_dir.mkdir(exist_ok=True)
    for rec, u in zip(ds.records, truth.true_loadings):
        write_matrix(u, loadings_dir / f"{rec.record_id}.tcdm")
    t2 = time.perf_counter()
    _write_run_json(
        Path(str(out) + ".run.json"), command, "synth",
        config={
            "p": cfg.p, "k_true": cfg.k_true, "t": cfg.t, "n_s": cfg.n_s,
            "sparsity": cfg.sparsity, "overlap": cfg.overlap,
            "noise_sigma": cfg.noise_sigma,
            "loading_freq_range": list(cfg.loading_freq_range),
            "subject_jitter": cfg.subject_jitter,
            "output": str(out), "truth": str(truth_dir),
        },
        seeds=[args.seed],
        elapsed={"generate_ms": (t1 - t0) * 1e3, "write_ms": (t2 - t1) * 1e3,
                 "total_ms": (t2 - t0) * 1e3},
    )
    print(f"wrote {out} ({ds.total_rows} rows x {ds.p} voxels, "
          f"{len(ds.records)} records) and {truth_dir}/")


def cmd_reduce(args, command: str):
    plan = ReductionPlan(
        method=_METHOD_FLAGS[args.method],
        m=args.m,
        alpha=args.alpha,
        oversample=args.oversample,
        power_iters=args.power_iters,
        rng=RngSpec(args.seed, "reduce"),
    )
    t0 = time.perf_counter()
    ds = read_dataset(args.input)
    t1 = time.perf_counter()
    ds_r, results = reduce_dataset(ds, plan)
    t2 = time.perf_counter()
    out = Path(args.output)
    write_dataset(ds_r, out)
    report = Path(args.report)
    write_csv(
        report,
        ["record_id", "method", "m", "residual_fro", "elapsed_ms"],
        [(r.record_id, r.method, r.m, r.residual_fro, r.elapsed_ms) for r in results],
    )
    t3 = time.perf_counter()
    _write_run_json(
        Path(str(out) + ".run.json"), command, "reduce",
        config={
            "input": str(args.input), "method": plan.method, "m": plan.m,
            "alpha": plan.alpha, "oversample": plan.oversample,
            "power_iters": plan.power_iters, "output": str(out),
            "report": str(report),
        },
        seeds=[args.seed],
        elapsed={"load_ms": (t1 - t0) * 1e3, "reduce_ms": (t2 - t1) * 1e3,
                 "write_ms": (t3 - t2) * 1e3, "total_ms": (t3 - t0) * 1e3},
    )
    if not args.no_plot:
        from .plots import plot_reduce_report

        plot_reduce_report(report, report.with_suffix(".png"))
    print(f"wrote {out} ({ds_r.total_rows} rows kept of {ds.total_rows}) "
          f"and {report}")


def cmd_decompose(args, command: str):
    init_maps = None
    if args.init:
        init_maps = read_matrix(args.init)
    cfg = DLConfig(
        k=args.k,
        lam=args.lam,
        batch_size=args.batch_size,
        epochs=args.epochs,
        rng=RngSpec(args.seed),
        init_maps=init_maps,
    )
    t0 = time.perf_counter()
    ds = read_dataset(args.input)
    t1 = time.perf_counter()
    decomp, info = fit(ds, cfg, return_info=True)
    t2 = time.perf_counter()
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_matrix(decomp.spatial_maps, out_dir / "maps.tcdm")
    write_matrix(decomp.temporal_atoms, out_dir / "atoms.tcdm")
    t3 = time.perf_counter()
    _write_run_json(
        out_dir / "run.json", command, "decompose",
        config={
            "input": str(args.input), "k": cfg.k, "lambda": cfg.lam,
            "batch_size": cfg.batch_size, "epochs": cfg.epochs,
            "init": args.init, "output": str(out_dir),
        },
        seeds=[args.seed],
        elapsed={"load_ms": (t1 - t0) * 1e3, "fit_ms": (t2 - t1) * 1e3,
                 "write_ms": (t3 - t2) * 1e3, "total_ms": (t3 - t0) * 1e3},
        warnings=info.warnings,
        extra={
            "objective": decomp.objective_value,
            "dead_atoms": info.dead_atoms_final,
            "lasso_nonconverged": info.lasso_nonconverged,
        },
    )
    print(f"wrote {out_dir}/ (objective {decomp.objective_value:.6g}, "
          f"{info.dead_atoms_final} dead atoms)")


def _load_run_maps(dirs_arg: str, what: str):
    sets = []
    for d in dirs_arg.split(","):
        d = d.strip()
        if not d:
            raise UsageError(f"empty path in --{what}")
        maps_path = Path(d) / "maps.tcdm"
        maps = read_matrix(maps_path)
        sets.append(MapSet(maps, run_labels=(d,) * maps.shape[1]))
    return sets


def cmd_compare(args, command: str):
    t0 = time.perf_counter()
    ref_sets = _load_run_maps(args.reference, "reference")
    cand_sets = _load_run_maps(args.candidate, "candidate")
    t1 = time.perf_counter()
    value, dispersion = d_l(ref_sets, cand_sets)
    matching = match_maps(concat_map_sets(ref_sets), concat_map_sets(cand_sets))
    t2 = time.perf_counter()
    out = Path(args.output)
    rows = [("pair", i, j, c, None) for i, j, c in matching.pairs]
    rows.append(("d_l", None, None, value, dispersion))
    write_csv(out, ["kind", "pair_i", "pair_j", "corr", "dispersion"], rows)
    t3 = time.perf_counter()
    _write_run_json(
        Path(str(out) + ".run.json"), command, "compare",
        config={"reference": args.reference, "candidate": args.candidate,
                "output": str(out)},
        seeds=[],
        elapsed={"load_ms": (t1 - t0) * 1e3, "compare_ms": (t2 - t1) * 1e3,
                 "write_ms": (t3 - t2) * 1e3, "total_ms": (t3 - t0) * 1e3},
    )
    if not args.no_plot:
        from .plots import plot_compare

        plot_compare(out, out.with_suffix(".png"))
    disp_text = "n/a" if dispersion is None else f"{dispersion:.4f}"
    print(f"d_l = {value:.4f} (dispersion {disp_text}) over "
          f"{len(matching.pairs)} matched pairs -> {out}")


def cmd_bench(args, command: str):
    workers = args.workers if args.workers is not None else _default_workers()
    if workers < 1:
        raise UsageError(f"--workers must be >= 1, got {workers}")
    spec = load_experiment_spec(args.spec, output_override=args.output)
    if not spec.output_dir:
        raise UsageError("no output directory: pass --output or set 'output' in the spec")
    t0 = time.perf_counter()
    summary = run_experiment(spec, workers=workers)
    t1 = time.perf_counter()
    out_dir = Path(spec.output_dir)
    _write_run_json(
        out_dir / "run.json", command, "bench",
        config={
            "spec": str(args.spec), "dataset": spec.dataset_path, "k": spec.k,
            "l": spec.l_tradeoff, "l_values": list(spec.l_values),
            "workers": workers, "output": str(out_dir),
            "reference_lambda": spec.reference.lam,
            "candidates": [c.name for c in spec.candidates],
        },
        seeds=sorted(
            set(spec.reference.seeds)
            | {s for c in spec.candidates for s in c.seeds}
            | (set(spec.baseline.seeds) if spec.baseline else set())
        ),
        elapsed={"total_ms": (t1 - t0) * 1e3},
    )
    if not args.no_plot:
        from .plots import plot_stabilization, plot_tradeoff

        plot_tradeoff(out_dir / "tradeoff.csv", out_dir / "tradeoff.png",
                      timings=summary["timings"])
        if summary["stabilization"]:
            plot_stabilization(out_dir / "stabilization.csv",
                               out_dir / "stabilization.png")
    for point in summary["tradeoff"]:
        disp = "n/a" if point.d_l_dispersion is None else f"{point.d_l_dispersion:.4f}"
        print(f"{point.name}: d_l = {point.d_l_value:.4f} (dispersion {disp}, "
              f"lambda {point.lambda_best:.4g})")
    print(f"wrote {out_dir}/")


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    command = shlex.join(["tcdl", *argv])
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args, command)
        return 0
    except UsageError as exc:
        print(f"tcdl: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"tcdl: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"tcdl: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
