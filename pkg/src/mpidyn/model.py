"""Core data model: pixel grids, system matrices, time partitions, datasets.

The acquisition interval of every frame is split into equally sized
subintervals; the tracer concentration is assumed constant on each
subinterval.  All types are immutable after construction and the operations
below are pure functions, so they are safe to share between workers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "Grid2D",
    "SystemMatrix",
    "TimePartition",
    "ConcentrationSequence",
    "DynamicDataset",
    "gamma",
    "slice_subproblem",
    "slice_data",
]


@dataclass(frozen=True)
class Grid2D:
    """Uniform 2D pixel grid over a rectangular field of view.

    ``origin_shift`` moves the whole grid rectangle by a sub-pixel offset in
    world coordinates.  A simulation grid shifted by half of its (finer)
    pixel keeps its centers interleaved with the reconstruction grid, so the
    two discretizations never coincide.
    """

    nx: int
    ny: int
    fov_width: float
    fov_height: float
    origin_shift: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("pixel counts must be >= 1")
        if self.fov_width <= 0 or self.fov_height <= 0:
            raise ValueError("field of view must have positive extent")
        sx, sy = self.origin_shift
        if abs(sx) >= self.pixel_width or abs(sy) >= self.pixel_height:
            raise ValueError("origin_shift must be smaller than one pixel")

    @property
    def n_pixels(self) -> int:
        return self.nx * self.ny

    @property
    def pixel_width(self) -> float:
        return self.fov_width / self.nx

    @property
    def pixel_height(self) -> float:
        return self.fov_height / self.ny

    @property
    def pixel_area(self) -> float:
        return self.pixel_width * self.pixel_height

    @property
    def origin(self) -> tuple[float, float]:
        """Lower-left corner of the (shifted) grid rectangle."""
        return (
            -0.5 * self.fov_width + self.origin_shift[0],
            -0.5 * self.fov_height + self.origin_shift[1],
        )

    @property
    def fov_diagonal(self) -> float:
        return float(np.hypot(self.fov_width, self.fov_height))

    def pixel_centers(self) -> np.ndarray:
        """Pixel centers as an ``(n_pixels, 2)`` array of (x, y) coordinates.

        Flattened pixel index is ``iy * nx + ix`` (x varies fastest), i.e.
        ``values.reshape(ny, nx)`` yields the image with row index = y index.
        """
        x0, y0 = self.origin
        xs = x0 + (np.arange(self.nx) + 0.5) * self.pixel_width
        ys = y0 + (np.arange(self.ny) + 0.5) * self.pixel_height
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])


@dataclass(frozen=True)
class SystemMatrix:
    """Dense forward operator mapping pixel concentrations to coil voltages.

    Rows are ordered time-major: row ``t * n_coils + r`` holds the response
    of coil ``r`` at time sample ``t``, so the samples of a contiguous time
    subinterval occupy a contiguous row block.
    """

    entries: np.ndarray
    n_coils: int
    sample_dt: float

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2:
            raise ValueError("system matrix must be 2-dimensional")
        if not np.all(np.isfinite(entries)):
            raise ValueError("system matrix entries must be finite")
        if self.n_coils < 1:
            raise ValueError("n_coils must be >= 1")
        if entries.shape[0] % self.n_coils != 0:
            raise ValueError("row count must be a multiple of n_coils")
        if self.sample_dt <= 0:
            raise ValueError("sample_dt must be positive")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @property
    def n_samples(self) -> int:
        return self.rows // self.n_coils


@dataclass(frozen=True)
class TimePartition:
    """Split of the acquisition into per-frame subintervals.

    Each of the ``n_frames`` frames contains ``samples_per_frame`` time
    samples and is divided into ``subproblems_per_frame`` equally long
    subintervals, giving ``n_subproblems`` subproblems in acquisition order.
    """

    n_frames: int
    samples_per_frame: int
    subproblems_per_frame: int = 1

    def __post_init__(self):
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if self.samples_per_frame < 1:
            raise ValueError("samples_per_frame must be >= 1")
        if self.subproblems_per_frame < 1:
            raise ValueError("subproblems_per_frame must be >= 1")
        if self.samples_per_frame % self.subproblems_per_frame != 0:
            raise ValueError(
                "subproblems_per_frame must divide samples_per_frame"
            )

    @property
    def n_subproblems(self) -> int:
        return self.n_frames * self.subproblems_per_frame

    @property
    def samples_per_subproblem(self) -> int:
        return self.samples_per_frame // self.subproblems_per_frame

    def frame_of(self, subproblem: int) -> int:
        return subproblem // self.subproblems_per_frame

    def fragment_of(self, subproblem: int) -> int:
        return subproblem % self.subproblems_per_frame


def gamma(partition: TimePartition, sample_index: int, frame_index: int) -> int:
    """Map a (frame, sample) pair to its subproblem index.

    Subproblems are numbered in acquisition order, so the result is
    ``frame * s + sample // (samples_per_frame / s)``.
    """
    if not 0 <= sample_index < partition.samples_per_frame:
        raise IndexError(f"sample_index {sample_index} out of range")
    if not 0 <= frame_index < partition.n_frames:
        raise IndexError(f"frame_index {frame_index} out of range")
    return (
        frame_index * partition.subproblems_per_frame
        + sample_index // partition.samples_per_subproblem
    )


def _row_block(partition: TimePartition, subproblem: int, n_coils: int) -> range:
    if not 0 <= subproblem < partition.n_subproblems:
        raise IndexError(f"subproblem index {subproblem} out of range")
    rows_per_sub = partition.samples_per_subproblem * n_coils
    fragment = partition.fragment_of(subproblem)
    return range(fragment * rows_per_sub, (fragment + 1) * rows_per_sub)


def slice_subproblem(
    matrix: SystemMatrix, partition: TimePartition, subproblem: int
) -> tuple[np.ndarray, range]:
    """Row block of the frame matrix belonging to one subproblem.

    Returns a view, not a copy; stacking the blocks of all fragments of a
    frame in order reproduces the full frame matrix.
    """
    if matrix.n_samples != partition.samples_per_frame:
        raise ValueError("matrix sample count does not match the partition")
    rows = _row_block(partition, subproblem, matrix.n_coils)
    return matrix.entries[rows.start : rows.stop], rows


def slice_data(
    frame_data: np.ndarray, partition: TimePartition, subproblem: int
) -> np.ndarray:
    """Fragment of one frame's voltage vector belonging to one subproblem."""
    frame_data = np.asarray(frame_data)
    if frame_data.ndim != 1 or frame_data.size % partition.samples_per_frame != 0:
        raise ValueError("frame data length must be a multiple of samples_per_frame")
    n_coils = frame_data.size // partition.samples_per_frame
    rows = _row_block(partition, subproblem, n_coils)
    return frame_data[rows.start : rows.stop]


@dataclass(frozen=True)
class ConcentrationSequence:
    """Non-negative concentration states, one per subproblem."""

    states: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.float64)
        if states.ndim != 2:
            raise ValueError("states must be a (n_states, n_pixels) array")
        if np.any(states < 0):
            raise ValueError("concentrations must be non-negative")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)

    @property
    def n_states(self) -> int:
        return self.states.shape[0]


@dataclass(frozen=True)
class DynamicDataset:
    """A dynamic acquisition: one static system matrix plus per-frame data.

    ``frames[k]`` is the voltage vector measured during frame ``k``.  When
    present, ``ground_truth`` holds the phantom state at the start of every
    subinterval of ``partition``.
    """

    system_matrix: SystemMatrix
    partition: TimePartition
    frames: np.ndarray
    grid: Grid2D
    ground_truth: ConcentrationSequence | None = None
    snr: float | None = None

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise ValueError("frames must be a (n_frames, rows) array")
        if frames.shape[0] != self.partition.n_frames:
            raise ValueError("frame count does not match the partition")
        if frames.shape[1] != self.system_matrix.rows:
            raise ValueError("frame data length does not match the system matrix")
        if self.system_matrix.n_samples != self.partition.samples_per_frame:
            raise ValueError("system matrix sample count does not match the partition")
        if self.system_matrix.cols != self.grid.n_pixels:
            raise ValueError("system matrix columns do not match the grid")
        if self.ground_truth is not None:
            if self.ground_truth.n_states != self.partition.n_subproblems:
                raise ValueError("ground truth length does not match the partition")
            if self.ground_truth.states.shape[1] != self.grid.n_pixels:
                raise ValueError("ground truth state size does not match the grid")
        if self.snr is not None and self.snr <= 0:
            raise ValueError("snr must be positive")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.partition.n_frames

    def subproblem(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        """Matrix block and data fragment of one subproblem."""
        block, _ = slice_subproblem(self.system_matrix, self.partition, index)
        frame = self.frames[self.partition.frame_of(index)]
        return block, slice_data(frame, self.partition, index)

    def rotated(self, reference_frame: int) -> "DynamicDataset":
        """Reorder frames cyclically so ``reference_frame`` becomes frame 0.

        Reindexes the subproblem sequence accordingly; the ground truth is
        rotated by whole frames so state 0 stays the reference state.
        """
        k = reference_frame % self.n_frames
        if k == 0:
            return self
        truth = self.ground_truth
        if truth is not None:
            shift = k * self.partition.subproblems_per_frame
            truth = ConcentrationSequence(np.roll(truth.states, -shift, axis=0))
        return replace(
            self, frames=np.roll(self.frames, -k, axis=0), ground_truth=truth
        )
