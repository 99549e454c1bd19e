"""Batch pipeline front-end.

Subcommands: ``simulate`` generates a dataset directory, ``estimate-levels``
writes a per-subproblem uncertainty CSV, ``reconstruct`` runs one solver,
``evaluate`` scores a reconstruction against stored ground truth, and
``sweep`` drives an experiment grid.  Every command writes a manifest next
to its outputs; identical inputs and seeds reproduce outputs bit-for-bit.

Exit codes: 0 success, 2 usage or config error, 3 I/O error, 4 partial
sweep failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from mpidyn import __version__, figures
from mpidyn import io as mio
from mpidyn.evaluation import (
    SweepCell,
    centroid_error,
    mse,
    relative_l2,
    run_experiment_suite,
)
from mpidyn.inexactness import (
    UncertaintyLevels,
    read_levels_csv,
    write_levels_csv,
    zeta_norm_frames,
    zeta_prior_recon,
    zeta_subframe_interpolated,
)
from mpidyn.io import ConfigError, IoFormatError
from mpidyn.model import DynamicDataset
from mpidyn.simulator import generate_dataset
from mpidyn.solvers import (
    DEFAULT_SWEEPS,
    SolveResult,
    SolverConfig,
    regularized_kaczmarz,
    resesop_kaczmarz,
    sesop_kaczmarz,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_PARTIAL = 4

SUBSIZES = {1.0: 1, 0.5: 2, 0.25: 4, 0.125: 8, 0.0625: 16, 0.03125: 32}

METRIC_COLUMNS = [
    "cell_id",
    "algorithm",
    "estimator",
    "scale",
    "subsize",
    "lambda",
    "frame",
    "mse",
    "rel_l2",
    "centroid_err",
]

log = logging.getLogger(__name__)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _subsize_to_s(subsize: float) -> int:
    for fraction, s in SUBSIZES.items():
        if abs(subsize - fraction) < 1e-12:
            return s
    raise ConfigError("subsize: must be one of 1, 0.5, 0.25, 0.125, 0.0625, 0.03125")


def _load_partitioned(data_dir, subsize: float) -> DynamicDataset:
    return mio.load_dataset(data_dir, subproblems_per_frame=_subsize_to_s(subsize))


def _write_trace_csv(path, result: SolveResult) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["sweep", "subproblem", "residual", "skipped", "mse"])
        for sweep in range(result.sweeps_run):
            sweep_mse = "" if result.mse_trace is None else _fmt(float(result.mse_trace[sweep]))
            for sub in range(result.residuals.shape[1]):
                writer.writerow(
                    [
                        sweep,
                        sub,
                        _fmt(float(result.residuals[sweep, sub])),
                        int(result.skipped[sweep, sub]),
                        sweep_mse,
                    ]
                )


def cmd_simulate(args, argv) -> int:
    config = mio.load_config(args.config)
    seeds = config.get("seeds", {})
    seed = args.seed if args.seed is not None else int(seeds.get("data", 0))
    scanner = mio.scanner_from_config(config)
    grid_recon, grid_fine = mio.grids_from_config(config)
    motion = mio.phantom_from_config(config)
    snr = mio.snr_from_config(config)
    partition_cfg = config.get("partition", {})
    n_frames = int(partition_cfg.get("n_frames", 7))
    s = int(partition_cfg.get("subproblems_per_frame", 1))
    try:
        acquisition = generate_dataset(
            scanner,
            grid_recon,
            grid_fine,
            motion,
            n_frames=n_frames,
            snr=snr,
            seed=seed,
            subproblems_per_frame=s,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    fpr = motion.frames_per_rotation
    mio.save_dataset(
        out,
        acquisition,
        config=config,
        seed=seed,
        extra_meta={"fpr": None if math.isinf(fpr) else fpr},
    )
    mio.write_manifest(out / "manifest.json", argv, mio.config_hash(config), seed)
    print(f"wrote {n_frames}-frame dataset to {out}")
    return EXIT_OK


def cmd_estimate_levels(args, argv) -> int:
    dataset = _load_partitioned(args.data, args.subsize)
    dataset = dataset.rotated(args.reference_frame)
    s = dataset.partition.subproblems_per_frame
    try:
        if args.method == "norm":
            levels = zeta_norm_frames(dataset)
        elif args.method == "interp":
            levels = zeta_subframe_interpolated(dataset)
        elif args.method == "prior-recon":
            levels = zeta_prior_recon(dataset, lam=args.lam, iters=args.prior_sweeps)
        else:
            raise ConfigError(f"method: unknown estimator {args.method!r}")
    except ValueError as exc:
        raise ConfigError(f"method {args.method!r} with subsize {args.subsize}: {exc}") from exc
    if args.scale != 1.0:
        levels = levels.scaled(args.scale)
    if args.zeta_noise > 0.0:
        levels = levels.perturbed(args.zeta_noise, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_levels_csv(levels, out)
    figures.save_levels_figure(levels.zeta, out.with_suffix(".png"))
    effective = {
        "method": args.method,
        "subsize": args.subsize,
        "scale": args.scale,
        "zeta_noise": args.zeta_noise,
        "reference_frame": args.reference_frame,
    }
    mio.write_manifest(
        out.with_suffix(".manifest.json"), argv, mio.config_hash(effective), args.seed
    )
    print(f"wrote {levels.zeta.size} levels ({levels.method}) to {out}")
    return EXIT_OK


def cmd_reconstruct(args, argv) -> int:
    dataset = _load_partitioned(args.data, args.subsize)
    dataset = dataset.rotated(args.reference_frame)
    sweeps = args.sweeps if args.sweeps is not None else DEFAULT_SWEEPS[args.algo]
    positivity = not args.no_positivity
    if args.algo == "resesop":
        if args.levels is None:
            raise ConfigError("levels: resesop requires --levels")
        levels = read_levels_csv(args.levels)
        cfg = SolverConfig(
            algorithm="resesop", max_sweeps=sweeps, tau=args.tau, positivity=positivity
        )
        result = resesop_kaczmarz(dataset, levels, cfg)
    elif args.algo == "sesop":
        cfg = SolverConfig(
            algorithm="sesop", max_sweeps=sweeps, tau=args.tau, positivity=positivity
        )
        result = sesop_kaczmarz(dataset, cfg)
    else:
        if args.lam is None:
            raise ConfigError("lambda: reg-kaczmarz requires --lambda")
        cfg = SolverConfig(
            algorithm="reg-kaczmarz", lam=args.lam, max_sweeps=sweeps, positivity=positivity
        )
        truth = dataset.ground_truth.states[0] if dataset.ground_truth else None
        result = regularized_kaczmarz(
            dataset.system_matrix.entries, dataset.frames[0], cfg, truth=truth
        )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mio.write_vector(out / "recon.dirv", result.reconstruction)
    mio.export_image(result.reconstruction, dataset.grid, out / "recon.pgm", "pgm16")
    mio.export_image(result.reconstruction, dataset.grid, out / "recon.csv", "csv")
    figures.save_image_figure(
        result.reconstruction,
        dataset.grid,
        out / "recon.png",
        title=f"{args.algo}, frame {args.reference_frame}",
    )
    _write_trace_csv(out / "trace.csv", result)
    if result.mse_trace is not None:
        figures.save_trace_figure(result.mse_trace, out / "mse_trace.png")
    summary = {
        "algorithm": args.algo,
        "reference_frame": args.reference_frame,
        "subsize": args.subsize,
        "lambda": args.lam,
        "sweeps_run": result.sweeps_run,
        "termination": result.termination,
        "tool_version": __version__,
    }
    (out / "result.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    mio.write_manifest(out / "manifest.json", argv, mio.config_hash(summary), None)
    print(f"{args.algo}: {result.sweeps_run} sweeps ({result.termination}), wrote {out}")
    return EXIT_OK


def cmd_evaluate(args, argv) -> int:
    rec_dir = Path(args.rec)
    summary_path = rec_dir / "result.json"
    if not summary_path.exists():
        raise IoFormatError(f"{rec_dir}: missing result.json")
    summary = json.loads(summary_path.read_text())
    recon = mio.read_vector(rec_dir / "recon.dirv")
    dataset = _load_partitioned(args.truth, summary.get("subsize", 1.0))
    dataset = dataset.rotated(int(summary.get("reference_frame", 0)))
    if dataset.ground_truth is None:
        raise ConfigError("truth: dataset directory has no ground truth")
    truth = dataset.ground_truth.states[0]
    row = {
        "cell_id": "recon",
        "algorithm": summary.get("algorithm"),
        "estimator": "",
        "scale": "",
        "subsize": summary.get("subsize"),
        "lambda": summary.get("lambda"),
        "frame": summary.get("reference_frame"),
        "mse": mse(recon, truth),
        "rel_l2": relative_l2(recon, truth),
        "centroid_err": centroid_error(recon, truth, dataset.grid),
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(METRIC_COLUMNS)
        writer.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])
    figures.save_image_grid(
        {"reconstruction": recon, "ground truth": truth},
        dataset.grid,
        out.with_suffix(".png"),
        ncols=2,
    )
    mio.write_manifest(out.with_suffix(".manifest.json"), argv, mio.config_hash(row | {"mse": None, "rel_l2": None, "centroid_err": None}), None)
    print(f"mse={row['mse']:.6g} rel_l2={row['rel_l2']:.6g} -> {out}")
    return EXIT_OK


def _sweep_cells(config: dict) -> list[SweepCell]:
    solver_cfg = config.get("solver", {})
    estimator_cfg = config.get("estimator", {})
    partition_cfg = config.get("partition", {})
    algorithms = solver_cfg.get("algorithms", [solver_cfg.get("algorithm", "resesop")])
    subsizes = [float(f) for f in partition_cfg.get("subsizes", [1.0])]
    scales = [float(x) for x in estimator_cfg.get("scales", [estimator_cfg.get("scale", 1.0)])]
    methods = estimator_cfg.get("methods", [estimator_cfg.get("method", "norm")])
    zeta_noise = float(estimator_cfg.get("zeta_noise", 0.15))
    cells: list[SweepCell] = []
    for algo in algorithms:
        if algo == "reg-kaczmarz":
            grid = solver_cfg.get("lambda_grid", [solver_cfg.get("lambda")])
            for lam in grid:
                if lam is None:
                    raise ConfigError("solver.lambda_grid: baseline cells need lambda values")
                cells.append(SweepCell(algorithm=algo, lam=float(lam)))
        elif algo == "sesop":
            for subsize in subsizes:
                cells.append(SweepCell(algorithm=algo, subsize=subsize))
        elif algo == "resesop":
            for subsize in subsizes:
                for method in methods:
                    noise = zeta_noise if method == "norm-noise" else 0.0
                    estimator = "norm" if method == "norm-noise" else method
                    for scale in scales:
                        cells.append(
                            SweepCell(
                                algorithm=algo,
                                estimator=estimator,
                                scale=scale,
                                zeta_noise=noise,
                                subsize=subsize,
                            )
                        )
        else:
            raise ConfigError(f"solver.algorithms: unknown algorithm {algo!r}")
    return cells


def cmd_sweep(args, argv) -> int:
    config = mio.load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset_dir = out / "dataset"
    sim_args = argparse.Namespace(config=args.config, out=dataset_dir, seed=None)
    cmd_simulate(sim_args, argv)

    solver_cfg = config.get("solver", {})
    estimator_cfg = config.get("estimator", {})
    seeds = config.get("seeds", {})
    cells = _sweep_cells(config)
    results = run_experiment_suite(
        load=lambda s: mio.load_dataset(dataset_dir, subproblems_per_frame=s),
        cells=cells,
        reference_frame=int(solver_cfg.get("reference_frame", 0)),
        sweeps=solver_cfg.get("sweeps"),
        baseline_sweeps=solver_cfg.get("baseline_sweeps"),
        tau=float(solver_cfg.get("tau", 1.001)),
        zeta_seed=int(seeds.get("zeta_noise", 0)),
        prior_lam=float(estimator_cfg.get("prior_lambda", 1.0)),
    )

    trace_dir = out / "traces"
    trace_dir.mkdir(exist_ok=True)
    reference = int(solver_cfg.get("reference_frame", 0))
    images = {}
    with open(out / "report.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(METRIC_COLUMNS)
        for res in results:
            cell = res.cell
            if res.failed:
                writer.writerow(
                    [cell.cell_id, cell.algorithm, cell.estimator, _fmt(cell.scale),
                     _fmt(cell.subsize), _fmt(cell.lam), reference, "", "", ""]
                )
                continue
            m = res.metrics
            writer.writerow(
                [cell.cell_id, cell.algorithm, cell.estimator, _fmt(cell.scale),
                 _fmt(cell.subsize), _fmt(cell.lam), m.frame, _fmt(m.mse),
                 _fmt(m.rel_l2), _fmt(m.centroid_err)]
            )
            _write_trace_csv(trace_dir / f"{cell.cell_id}.csv", res.solve)
            images[cell.cell_id] = res.solve.reconstruction
    failures = [res for res in results if res.failed]
    if failures:
        with open(out / "failures.csv", "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["cell_id", "error"])
            for res in failures:
                writer.writerow([res.cell.cell_id, res.error])
    if images:
        grid = mio.load_dataset(dataset_dir).grid
        figures.save_image_grid(images, grid, out / "reconstructions.png")
    mio.write_manifest(
        out / "manifest.json", argv, mio.config_hash(config), seeds.get("data")
    )
    print(f"sweep: {len(results) - len(failures)}/{len(results)} cells ok -> {out}")
    return EXIT_OK if not failures else EXIT_PARTIAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpidyn",
        description="Dynamic magnetic particle imaging: simulate, estimate, reconstruct.",
    )
    parser.add_argument("--version", action="version", version=f"mpidyn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a rotating-disk dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate-levels", help="estimate per-subproblem uncertainty levels")
    p.add_argument("--data", required=True)
    p.add_argument("--method", required=True, choices=["norm", "interp", "prior-recon"])
    p.add_argument("--subsize", type=float, default=1.0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--zeta-noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reference-frame", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--prior-sweeps", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate_levels)

    p = sub.add_parser("reconstruct", help="run one reconstruction")
    p.add_argument("--data", required=True)
    p.add_argument("--algo", required=True, choices=["reg-kaczmarz", "sesop", "resesop"])
    p.add_argument("--levels", default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--subsize", type=float, default=1.0)
    p.add_argument("--sweeps", type=int, default=None)
    p.add_argument("--reference-frame", type=int, default=0)
    p.add_argument("--tau", type=float, default=1.001)
    p.add_argument("--no-positivity", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="score a reconstruction against ground truth")
    p.add_argument("--rec", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="run an experiment grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    level = os.environ.get("MPIDYN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, ["mpidyn"] + argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IoFormatError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
