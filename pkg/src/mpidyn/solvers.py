"""Reconstruction algorithms.

Three solvers share one result type:

* ``regularized_kaczmarz`` -- the standard row-action baseline for the
  Tikhonov-regularized least-squares problem, stopped early.
* ``resesop_kaczmarz`` -- sequential subspace optimization over the
  subproblem cycle with stripes whose widths encode the per-subproblem
  uncertainty levels, a discrepancy-principle skip rule, two search
  directions and an optional positivity constraint.
* ``sesop_kaczmarz`` -- the zero-uncertainty limit of the above (stripes
  degenerate to hyperplanes).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from mpidyn.inexactness import UncertaintyLevels
from mpidyn.model import DynamicDataset
from mpidyn.projections import Stripe, project_stripe_intersection

__all__ = [
    "SolverConfig",
    "SolveResult",
    "SolverNumericalError",
    "regularized_kaczmarz",
    "resesop_kaczmarz",
    "sesop_kaczmarz",
    "discrepancy_check",
    "clamp_nonnegative",
]

log = logging.getLogger(__name__)

ALGORITHMS = ("reg-kaczmarz", "sesop", "resesop")

DEFAULT_SWEEPS = {"reg-kaczmarz": 5, "sesop": 10, "resesop": 10}


class SolverNumericalError(ArithmeticError):
    """Raised when an iterate or residual stops being finite."""


@dataclass
class SolverConfig:
    """Shared solver settings.

    ``lam`` is the Tikhonov parameter and only read by the baseline.  The
    discrepancy multiplier ``tau`` must exceed 1.  ``stagnation_tolerance``
    is the relative change per sweep below which the cyclic solvers stop.
    """

    algorithm: str = "resesop"
    lam: float = 0.0
    max_sweeps: int = 10
    tau: float = 1.001
    positivity: bool = True
    initial_guess: np.ndarray | None = None
    stagnation_tolerance: float = 1e-12
    record_iterates: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if not self.tau > 1.0:
            raise ValueError("tau must be > 1")


@dataclass
class SolveResult:
    """Reconstruction plus the per-sweep iteration trace."""

    reconstruction: np.ndarray
    sweeps_run: int
    residuals: np.ndarray  # (sweeps_run, n_subproblems) residual norms
    skipped: np.ndarray  # (sweeps_run, n_subproblems) discrepancy hits
    mse_trace: np.ndarray | None  # per sweep, vs reference ground truth
    termination: str  # "stagnation" | "max_sweeps"
    iterates: list[np.ndarray] = field(default_factory=list)


def discrepancy_check(residual_norm: float, zeta: float, tau: float) -> bool:
    """Discrepancy principle: residual already explained by the uncertainty."""
    return residual_norm <= tau * zeta


def clamp_nonnegative(c: np.ndarray) -> np.ndarray:
    """Elementwise ``max(c, 0)``."""
    return np.maximum(c, 0.0)


def _initial_guess(cfg: SolverConfig, n: int) -> np.ndarray:
    if cfg.initial_guess is None:
        return np.zeros(n)
    guess = np.asarray(cfg.initial_guess, dtype=np.float64).copy()
    if guess.shape != (n,):
        raise ValueError("initial guess has the wrong length")
    return guess


def regularized_kaczmarz(
    matrix: np.ndarray,
    data: np.ndarray,
    cfg: SolverConfig,
    truth: np.ndarray | None = None,
) -> SolveResult:
    """Row-action solver for ``min ||A c - v||^2 + lam ||c||^2``.

    Uses the standard auxiliary-residual formulation: each row update also
    advances one entry of a dual variable ``z`` so the fixed point is the
    exact Tikhonov solution.  Rows are swept in natural order, zero rows are
    skipped, and the positivity clamp (when enabled) is applied after each
    full sweep.  Always runs ``cfg.max_sweeps`` sweeps.
    """
    a = np.asarray(matrix, dtype=np.float64)
    v = np.asarray(data, dtype=np.float64)
    if a.ndim != 2 or v.shape != (a.shape[0],):
        raise ValueError("matrix and data dimensions do not match")
    row_sq = np.einsum("ij,ij->i", a, a)
    sqrt_lam = np.sqrt(cfg.lam)
    c = _initial_guess(cfg, a.shape[1])
    z = np.zeros(a.shape[0])
    active = np.flatnonzero(row_sq > 0.0)

    residuals = np.empty((cfg.max_sweeps, 1))
    mse_trace = np.empty(cfg.max_sweeps) if truth is not None else None
    iterates: list[np.ndarray] = []
    for sweep in range(cfg.max_sweeps):
        for j in active:
            row = a[j]
            step = (v[j] - row @ c - sqrt_lam * z[j]) / (row_sq[j] + cfg.lam)
            c += step * row
            z[j] += step * sqrt_lam
        if cfg.positivity:
            c = clamp_nonnegative(c)
        residuals[sweep, 0] = np.linalg.norm(a @ c - v)
        if mse_trace is not None:
            mse_trace[sweep] = np.mean((c - truth) ** 2)
        if cfg.record_iterates:
            iterates.append(c.copy())
    return SolveResult(
        reconstruction=c,
        sweeps_run=cfg.max_sweeps,
        residuals=residuals,
        skipped=np.zeros((cfg.max_sweeps, 1), dtype=bool),
        mse_trace=mse_trace,
        termination="max_sweeps",
        iterates=iterates,
    )


def resesop_kaczmarz(
    dataset: DynamicDataset, levels: UncertaintyLevels, cfg: SolverConfig
) -> SolveResult:
    """Uncertainty-aware sequential subspace solver over the subproblem cycle.

    Per subiteration on subproblem ``i`` with iterate ``c``:
    residual ``w = A_i c - v_i`` is computed; when
    ``||w|| <= tau * zeta[i]`` the subproblem is skipped.  Otherwise the
    search direction is ``u = A_i^T w`` and ``c`` is projected onto the
    intersection of the stripe ``(u, <u,c> - ||w||^2, zeta[i] * ||w||)``
    with the stripe stored from the most recent non-skipped subiteration.
    The positivity clamp applies after each full sweep.  Terminates on
    stagnation (a sweep that changes ``c`` by at most
    ``stagnation_tolerance * ||c||``) or after ``max_sweeps``.

    Returns the single reference state all subproblems are regressed onto;
    reorder the dataset (``DynamicDataset.rotated``) to pick another
    reference frame.
    """
    partition = dataset.partition
    n_sub = partition.n_subproblems
    zeta = levels.zeta
    if zeta.shape != (n_sub,):
        raise ValueError(
            f"levels length {zeta.shape[0]} does not match {n_sub} subproblems"
        )
    subproblems = [dataset.subproblem(i) for i in range(n_sub)]
    truth = None
    if dataset.ground_truth is not None:
        truth = dataset.ground_truth.states[0]

    c = _initial_guess(cfg, dataset.system_matrix.cols)
    previous: Stripe | None = None
    sentinel = Stripe.whole_space(c.size)

    residuals = np.zeros((cfg.max_sweeps, n_sub))
    skipped = np.zeros((cfg.max_sweeps, n_sub), dtype=bool)
    mse_trace = np.empty(cfg.max_sweeps) if truth is not None else None
    iterates: list[np.ndarray] = []
    termination = "max_sweeps"
    sweeps_run = 0
    for sweep in range(cfg.max_sweeps):
        c_before = c.copy()
        for i in range(n_sub):
            block, fragment = subproblems[i]
            w = block @ c - fragment
            norm_w = float(np.linalg.norm(w))
            if not np.isfinite(norm_w):
                raise SolverNumericalError(f"non-finite residual in sweep {sweep}")
            residuals[sweep, i] = norm_w
            if discrepancy_check(norm_w, zeta[i], cfg.tau):
                skipped[sweep, i] = True
                if cfg.record_iterates:
                    iterates.append(c.copy())
                continue
            direction = block.T @ w
            if not np.any(direction):
                # Residual orthogonal to the operator range: no descent
                # direction exists for this subproblem.
                skipped[sweep, i] = True
                if cfg.record_iterates:
                    iterates.append(c.copy())
                continue
            current = Stripe(
                direction=direction,
                offset=float(direction @ c) - norm_w**2,
                half_width=zeta[i] * norm_w,
            )
            c = project_stripe_intersection(c, current, previous or sentinel)
            previous = current
            if cfg.record_iterates:
                iterates.append(c.copy())
        if cfg.positivity:
            c = clamp_nonnegative(c)
        if mse_trace is not None:
            mse_trace[sweep] = np.mean((c - truth) ** 2)
        sweeps_run = sweep + 1
        change = np.linalg.norm(c - c_before)
        if change <= cfg.stagnation_tolerance * np.linalg.norm(c_before):
            termination = "stagnation"
            break
        log.debug("sweep %d: change %.3e, skips %d", sweep, change, skipped[sweep].sum())

    return SolveResult(
        reconstruction=c,
        sweeps_run=sweeps_run,
        residuals=residuals[:sweeps_run],
        skipped=skipped[:sweeps_run],
        mse_trace=None if mse_trace is None else mse_trace[:sweeps_run],
        termination=termination,
        iterates=iterates,
    )


def sesop_kaczmarz(dataset: DynamicDataset, cfg: SolverConfig) -> SolveResult:
    """Zero-uncertainty limit: every stripe collapses to a hyperplane."""
    zeros = UncertaintyLevels(
        zeta=np.zeros(dataset.partition.n_subproblems), rho=1.0, method="manual"
    )
    return resesop_kaczmarz(dataset, zeros, cfg)
