"""Matplotlib report figures rendered next to the delimited outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from mpidyn.model import Grid2D

__all__ = [
    "save_image_figure",
    "save_image_grid",
    "save_trace_figure",
    "save_levels_figure",
]


def _extent(grid: Grid2D):
    x0, y0 = grid.origin
    return (x0, x0 + grid.fov_width, y0, y0 + grid.fov_height)


def save_image_figure(values: np.ndarray, grid: Grid2D, path, title: str | None = None):
    fig, ax = plt.subplots(figsize=(4, 4))
    image = np.asarray(values).reshape(grid.ny, grid.nx)
    im = ax.imshow(image, origin="lower", extent=_extent(grid), cmap="viridis")
    fig.colorbar(im, ax=ax, shrink=0.8)
    if title:
        ax.set_title(title)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_image_grid(images: dict[str, np.ndarray], grid: Grid2D, path, ncols: int = 3):
    """One panel per named image, shared color scale per panel."""
    n = len(images)
    ncols = min(ncols, max(n, 1))
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.2 * ncols, 3.2 * nrows), squeeze=False)
    for ax in axes.ravel():
        ax.set_axis_off()
    for ax, (label, values) in zip(axes.ravel(), images.items()):
        ax.set_axis_on()
        ax.imshow(
            np.asarray(values).reshape(grid.ny, grid.nx),
            origin="lower",
            extent=_extent(grid),
            cmap="viridis",
        )
        ax.set_title(label, fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_trace_figure(mse_trace: np.ndarray, path, title: str = "MSE per sweep"):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    sweeps = np.arange(1, len(mse_trace) + 1)
    ax.plot(sweeps, mse_trace, "o-")
    ax.set_xlabel("sweep")
    ax.set_ylabel("MSE")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_levels_figure(zeta: np.ndarray, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(np.arange(len(zeta)), zeta, "o-")
    ax.set_xlabel("subproblem")
    ax.set_ylabel("uncertainty level")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def figure_path(base, name: str) -> Path:
    return Path(base) / f"{name}.png"
