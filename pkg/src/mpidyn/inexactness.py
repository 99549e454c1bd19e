"""Estimation of per-subproblem uncertainty levels from measured data.

Each subproblem carries one total uncertainty level combining measurement
noise and the model error caused by motion.  The levels are estimated by
comparing the data of the initial subproblem with the data of all others:
directly for frame-sized subproblems, through a cubic spline over the
comparable fragments for subframe-sized subproblems, or from preliminary
baseline reconstructions.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from mpidyn.model import DynamicDataset, slice_data

__all__ = [
    "UncertaintyLevels",
    "zeta_norm_frames",
    "zeta_subframe_interpolated",
    "zeta_prior_recon",
    "estimate_noise_level",
    "estimate_rho",
    "write_levels_csv",
    "read_levels_csv",
    "rho_sidecar_path",
]

log = logging.getLogger(__name__)

METHODS = ("norm", "norm-interpolated", "prior-recon", "manual")

# Slack applied on top of the prior-reconstruction norm when bounding the
# solution norm; guards against underestimating the true solution.
_RHO_MARGIN = 1.5
_RHO_PRIOR_SWEEPS = 5


@dataclass(frozen=True)
class UncertaintyLevels:
    """Per-subproblem uncertainty levels plus the solution-norm bound."""

    zeta: np.ndarray
    rho: float = 1.0
    method: str = "manual"
    scale: float = 1.0

    def __post_init__(self):
        zeta = np.asarray(self.zeta, dtype=np.float64)
        if zeta.ndim != 1:
            raise ValueError("zeta must be a 1-d vector")
        if np.any(zeta < 0):
            raise ValueError("uncertainty levels must be non-negative")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.method not in METHODS:
            raise ValueError(f"unknown estimation method {self.method!r}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        zeta.setflags(write=False)
        object.__setattr__(self, "zeta", zeta)

    def scaled(self, factor: float) -> "UncertaintyLevels":
        """Multiply every level by ``factor``."""
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return replace(self, zeta=self.zeta * factor, scale=self.scale * factor)

    def perturbed(self, amount: float, seed: int) -> "UncertaintyLevels":
        """Multiply each level by ``1 + eps`` with ``eps ~ U[-amount, amount]``."""
        rng = np.random.default_rng(seed)
        factors = 1.0 + rng.uniform(-amount, amount, size=self.zeta.size)
        return replace(self, zeta=self.zeta * factors)

    def rotated(self, shift: int) -> "UncertaintyLevels":
        """Reindex levels after a cyclic subproblem reordering."""
        return replace(self, zeta=np.roll(self.zeta, -shift))


def zeta_norm_frames(dataset: DynamicDataset) -> UncertaintyLevels:
    """Levels for frame-sized subproblems: ``zeta[i] = norm(v_0 - v_i)``."""
    if dataset.partition.subproblems_per_frame != 1:
        raise ValueError(
            "norm method needs frame-sized subproblems; use the interpolated variant"
        )
    diffs = dataset.frames - dataset.frames[0]
    zeta = np.linalg.norm(diffs, axis=1)
    zeta[0] = 0.0
    return UncertaintyLevels(zeta=zeta, rho=estimate_rho(dataset), method="norm")


def zeta_subframe_interpolated(dataset: DynamicDataset) -> UncertaintyLevels:
    """Levels for subframe-sized subproblems via cubic interpolation.

    Only fragments covering the same time points of different frames are
    directly comparable, so the first fragment of every frame anchors the
    profile and a natural cubic spline fills in the remaining subproblems.
    Negative spline values are clamped to zero.
    """
    partition = dataset.partition
    s = partition.subproblems_per_frame
    if s < 2:
        raise ValueError("interpolated method needs subframe-sized subproblems")
    if partition.n_frames < 2:
        raise ValueError("need at least 2 frames to anchor the interpolation")
    reference = slice_data(dataset.frames[0], partition, 0)
    anchors = np.empty(partition.n_frames)
    for k in range(partition.n_frames):
        fragment = slice_data(dataset.frames[k], partition, k * s)
        anchors[k] = np.linalg.norm(reference - fragment)
    anchors[0] = 0.0
    spline = CubicSpline(np.arange(partition.n_frames) * s, anchors, bc_type="natural")
    zeta = np.maximum(spline(np.arange(partition.n_subproblems)), 0.0)
    zeta[0] = 0.0
    return UncertaintyLevels(
        zeta=zeta, rho=estimate_rho(dataset), method="norm-interpolated"
    )


def zeta_prior_recon(
    dataset: DynamicDataset, lam: float = 1.0, iters: int = 5
) -> UncertaintyLevels:
    """Levels from preliminary per-frame baseline reconstructions.

    The image-space mean-squared errors between the reconstruction of frame
    0 and every other frame are rescaled so their maximum matches the
    maximum data-space norm difference, aligning the two units.
    """
    from mpidyn.solvers import SolverConfig, regularized_kaczmarz  # cyclic at import time

    if dataset.partition.subproblems_per_frame != 1:
        raise ValueError("prior-recon method needs frame-sized subproblems")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    cfg = SolverConfig(algorithm="reg-kaczmarz", lam=lam, max_sweeps=iters)
    matrix = dataset.system_matrix.entries
    recons = [
        regularized_kaczmarz(matrix, dataset.frames[k], cfg).reconstruction
        for k in range(dataset.n_frames)
    ]
    errors = np.array([np.mean((recons[0] - r) ** 2) for r in recons])
    data_levels = np.linalg.norm(dataset.frames - dataset.frames[0], axis=1)
    peak = errors.max()
    zeta = errors * (data_levels.max() / peak) if peak > 0 else np.zeros_like(errors)
    zeta[0] = 0.0
    return UncertaintyLevels(
        zeta=zeta, rho=estimate_rho(dataset, lam), method="prior-recon"
    )


def estimate_noise_level(dataset: DynamicDataset) -> float:
    """Noise level from repeated static frames.

    Every pairwise frame difference contains two independent noise draws,
    hence the ``sqrt(2)`` normalization.
    """
    n = dataset.n_frames
    if n < 2:
        raise ValueError("need at least 2 frames to estimate the noise level")
    norms = [
        np.linalg.norm(dataset.frames[j] - dataset.frames[k])
        for j in range(n)
        for k in range(j + 1, n)
    ]
    return float(np.mean(norms) / np.sqrt(2.0))


def estimate_rho(dataset: DynamicDataset, lam: float = 1.0) -> float:
    """Solution-norm bound from a short baseline reconstruction of frame 0."""
    from mpidyn.solvers import SolverConfig, regularized_kaczmarz  # cyclic at import time

    cfg = SolverConfig(algorithm="reg-kaczmarz", lam=lam, max_sweeps=_RHO_PRIOR_SWEEPS)
    recon = regularized_kaczmarz(
        dataset.system_matrix.entries, dataset.frames[0], cfg
    ).reconstruction
    norm = float(np.linalg.norm(recon))
    if norm > 0.0:
        return _RHO_MARGIN * norm
    fallback = float(
        np.linalg.norm(dataset.frames[0]) / np.linalg.norm(dataset.system_matrix.entries)
    )
    log.warning("prior reconstruction is zero; falling back to rho=%.3e", fallback)
    return fallback


def rho_sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".rho")


def write_levels_csv(levels: UncertaintyLevels, path) -> None:
    """Write levels as ``subproblem,zeta`` rows plus a rho sidecar file."""
    path = Path(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["subproblem", "zeta"])
        for i, z in enumerate(levels.zeta):
            writer.writerow([i, f"{z:.17g}"])
    rho_sidecar_path(path).write_text(f"{levels.rho:.17g}\n")


def read_levels_csv(path, method: str = "manual") -> UncertaintyLevels:
    path = Path(path)
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["subproblem", "zeta"]:
            raise ValueError(f"unexpected levels header {header!r} in {path}")
        zeta = [float(row[1]) for row in reader]
    sidecar = rho_sidecar_path(path)
    rho = float(sidecar.read_text().strip()) if sidecar.exists() else 1.0
    return UncertaintyLevels(zeta=np.asarray(zeta), rho=rho, method=method)
