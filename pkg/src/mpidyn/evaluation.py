"""Quantitative evaluation and experiment sweep driver.

Metrics compare a reconstruction against the ground-truth state at the
start of the reference subinterval.  ``run_experiment_suite`` executes a
cross product of estimator/scale/subproblem-size/algorithm settings with
per-cell failure isolation, mirroring a benchmarking campaign.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from mpidyn.inexactness import (
    UncertaintyLevels,
    zeta_norm_frames,
    zeta_prior_recon,
    zeta_subframe_interpolated,
)
from mpidyn.model import DynamicDataset, Grid2D
from mpidyn.solvers import (
    DEFAULT_SWEEPS,
    SolveResult,
    SolverConfig,
    regularized_kaczmarz,
    resesop_kaczmarz,
    sesop_kaczmarz,
)

__all__ = [
    "MetricsReport",
    "SweepCell",
    "CellResult",
    "mse",
    "relative_l2",
    "centroid_error",
    "background_mse",
    "trace_is_monotone",
    "estimate_levels",
    "run_experiment_suite",
]

log = logging.getLogger(__name__)


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared error between two equally long vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("mse arguments must have equal length")
    return float(np.mean((a - b) ** 2))


def relative_l2(a: np.ndarray, b: np.ndarray) -> float:
    """``norm(a - b) / norm(b)``; ``b`` is the reference."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("relative_l2 arguments must have equal length")
    denom = np.linalg.norm(b)
    if denom == 0:
        raise ValueError("reference vector has zero norm")
    return float(np.linalg.norm(a - b) / denom)


def _centroid(values: np.ndarray, grid: Grid2D) -> np.ndarray:
    centers = grid.pixel_centers()
    mass = values.sum()
    return (values @ centers) / mass


def centroid_error(rec: np.ndarray, truth: np.ndarray, grid: Grid2D) -> float:
    """Distance between intensity-weighted centroids, in meters.

    A reconstruction without any mass cannot be localized; the field-of-view
    diagonal is returned as the worst-case sentinel.
    """
    rec = np.asarray(rec, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if truth.sum() <= 0:
        raise ValueError("ground truth has no mass")
    if rec.sum() <= 0:
        return grid.fov_diagonal
    return float(np.linalg.norm(_centroid(rec, grid) - _centroid(truth, grid)))


def background_mse(rec: np.ndarray, truth: np.ndarray) -> float:
    """Mean squared reconstruction value on truth-empty pixels."""
    rec = np.asarray(rec, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    mask = truth == 0
    if not mask.any():
        raise ValueError("ground truth has no background pixels")
    return float(np.mean(rec[mask] ** 2))


def trace_is_monotone(values: np.ndarray, tol: float = 1e-12) -> bool:
    """True when the sequence never grows by more than ``tol``."""
    values = np.asarray(values, dtype=np.float64)
    return bool(np.all(np.diff(values) <= tol))


@dataclass(frozen=True)
class MetricsReport:
    frame: int
    mse: float
    rel_l2: float
    centroid_err: float
    mse_trace: tuple[float, ...] = ()


@dataclass(frozen=True)
class SweepCell:
    """One experiment setting; ``lam`` only applies to the baseline."""

    algorithm: str
    estimator: str = "norm"
    scale: float = 1.0
    zeta_noise: float = 0.0
    subsize: float = 1.0
    lam: float | None = None

    @property
    def cell_id(self) -> str:
        parts = [self.algorithm]
        if self.algorithm == "resesop":
            parts += [self.estimator, f"x{self.scale:g}", f"noise{self.zeta_noise:g}"]
        if self.algorithm == "reg-kaczmarz":
            parts.append(f"lam{self.lam:g}")
        parts.append(f"sub{self.subsize:g}")
        return "-".join(parts)

    @property
    def subproblems_per_frame(self) -> int:
        s = 1.0 / self.subsize
        if abs(s - round(s)) > 1e-9 or round(s) not in (1, 2, 4, 8, 16, 32):
            raise ValueError("subsize must be one of 1, 1/2, 1/4, 1/8, 1/16, 1/32")
        return int(round(s))


@dataclass
class CellResult:
    cell: SweepCell
    metrics: MetricsReport | None = None
    solve: SolveResult | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def estimate_levels(
    dataset: DynamicDataset, method: str, prior_lam: float = 1.0, prior_sweeps: int = 5
) -> UncertaintyLevels:
    """Dispatch to the estimator matching ``method`` and the partition."""
    if method == "norm":
        return zeta_norm_frames(dataset)
    if method == "interp":
        return zeta_subframe_interpolated(dataset)
    if method == "prior-recon":
        return zeta_prior_recon(dataset, lam=prior_lam, iters=prior_sweeps)
    raise ValueError(f"unknown estimator {method!r}")


def _evaluate(result: SolveResult, dataset: DynamicDataset, frame: int) -> MetricsReport:
    truth = dataset.ground_truth.states[0]
    rec = result.reconstruction
    return MetricsReport(
        frame=frame,
        mse=mse(rec, truth),
        rel_l2=relative_l2(rec, truth),
        centroid_err=centroid_error(rec, truth, dataset.grid),
        mse_trace=() if result.mse_trace is None else tuple(result.mse_trace),
    )


def run_cell(
    cell: SweepCell,
    dataset: DynamicDataset,
    reference_frame: int = 0,
    sweeps: int | None = None,
    baseline_sweeps: int | None = None,
    tau: float = 1.001,
    zeta_seed: int = 0,
    prior_lam: float = 1.0,
    levels: UncertaintyLevels | None = None,
) -> CellResult:
    """Execute one experiment cell on an already partitioned dataset.

    ``sweeps`` overrides the sweep count of the subspace solvers,
    ``baseline_sweeps`` the early-stopping count of the baseline; both
    default to the per-algorithm values.
    """
    rotated = dataset.rotated(reference_frame)
    max_sweeps = sweeps if sweeps is not None else DEFAULT_SWEEPS[cell.algorithm]
    if cell.algorithm == "reg-kaczmarz":
        cfg = SolverConfig(
            algorithm="reg-kaczmarz",
            lam=cell.lam if cell.lam is not None else 0.0,
            max_sweeps=(
                baseline_sweeps
                if baseline_sweeps is not None
                else DEFAULT_SWEEPS["reg-kaczmarz"]
            ),
        )
        result = regularized_kaczmarz(
            rotated.system_matrix.entries,
            rotated.frames[0],
            cfg,
            truth=rotated.ground_truth.states[0] if rotated.ground_truth else None,
        )
    elif cell.algorithm == "sesop":
        result = sesop_kaczmarz(rotated, SolverConfig(algorithm="sesop", max_sweeps=max_sweeps, tau=tau))
    elif cell.algorithm == "resesop":
        if levels is None:
            method = cell.estimator if cell.subproblems_per_frame == 1 else "interp"
            levels = estimate_levels(rotated, method, prior_lam=prior_lam)
        if cell.scale != 1.0:
            levels = levels.scaled(cell.scale)
        if cell.zeta_noise > 0.0:
            levels = levels.perturbed(cell.zeta_noise, zeta_seed)
        cfg = SolverConfig(algorithm="resesop", max_sweeps=max_sweeps, tau=tau)
        result = resesop_kaczmarz(rotated, levels, cfg)
    else:
        raise ValueError(f"unknown algorithm {cell.algorithm!r}")
    return CellResult(cell=cell, metrics=_evaluate(result, rotated, reference_frame), solve=result)


def run_experiment_suite(
    load: Callable[[int], DynamicDataset],
    cells: list[SweepCell],
    reference_frame: int = 0,
    sweeps: int | None = None,
    baseline_sweeps: int | None = None,
    tau: float = 1.001,
    zeta_seed: int = 0,
    prior_lam: float = 1.0,
) -> list[CellResult]:
    """Run every cell, isolating failures.

    ``load`` maps a subproblems-per-frame count to a freshly partitioned
    dataset.  Base level estimates are cached per (estimator, partition), so
    scaled and perturbed variants reuse the same estimate.
    """
    datasets: dict[int, DynamicDataset] = {}
    level_cache: dict[tuple[str, int], UncertaintyLevels] = {}
    results = []
    for cell in cells:
        try:
            s = cell.subproblems_per_frame
            if s not in datasets:
                datasets[s] = load(s)
            levels = None
            if cell.algorithm == "resesop":
                method = cell.estimator if s == 1 else "interp"
                key = (method, s)
                if key not in level_cache:
                    level_cache[key] = estimate_levels(
                        datasets[s].rotated(reference_frame), method, prior_lam=prior_lam
                    )
                levels = level_cache[key]
            results.append(
                run_cell(
                    cell,
                    datasets[s],
                    reference_frame=reference_frame,
                    sweeps=sweeps,
                    baseline_sweeps=baseline_sweeps,
                    tau=tau,
                    zeta_seed=zeta_seed,
                    prior_lam=prior_lam,
                    levels=levels,
                )
            )
        except Exception as exc:  # noqa: BLE001 - cell isolation is the contract
            log.warning("cell %s failed: %s", cell.cell_id, exc)
            results.append(CellResult(cell=cell, error=str(exc)))
    return results
