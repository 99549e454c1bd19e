"""Voltage data simulation for a rotating-disk phantom.

The scanner model is a 2D Lissajous field-free-point system: a selection
gradient pins a field-free point that two sinusoidal drive fields steer
along a closed Lissajous curve once per frame.  The particle response uses
the equilibrium Langevin magnetization, so the forward map is linear in the
concentration and the system matrix can be assembled column by column.

Inverse-crime avoidance: data are generated on a finer, sub-pixel-shifted
grid than the one handed to the reconstruction, and the phantom moves on a
time scale finer than any subproblem (``MOTION_STEPS_PER_FRAME`` states per
frame).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from mpidyn.model import (
    ConcentrationSequence,
    DynamicDataset,
    Grid2D,
    SystemMatrix,
    TimePartition,
)

__all__ = [
    "MOTION_STEPS_PER_FRAME",
    "ScannerConfig",
    "PhantomMotion",
    "SimulatedAcquisition",
    "ffp_trajectory",
    "langevin",
    "build_system_matrix",
    "phantom_state",
    "forward_voltages",
    "generate_dataset",
    "default_scanner",
]

# Phantom states rendered per frame while generating data.  Frame-sized
# subproblems therefore genuinely suffer model inexactness, and every
# supported subproblem size (down to 1/32 frame) starts on a rendered state.
MOTION_STEPS_PER_FRAME = 32

_LANGEVIN_SERIES_THRESHOLD = 1e-4


def _default_coils() -> np.ndarray:
    return np.eye(2)


@dataclass(frozen=True)
class ScannerConfig:
    """2D Lissajous scanner and particle parameters.

    Frequencies must form a small rational ratio so the trajectory closes;
    the frame duration is the least common period and must hold an integer
    number of samples.  The vacuum permeability and receive-chain gain are
    folded into ``signal_gain``.
    """

    drive_frequencies: tuple[float, float]
    drive_amplitudes: tuple[float, float]
    selection_gradient: tuple[float, float]
    sample_rate: float
    coil_sensitivities: np.ndarray = field(default_factory=_default_coils)
    particle_moment: float = 1.0
    langevin_beta: float = 500.0
    signal_gain: float = 1.0

    def __post_init__(self):
        fx, fy = self.drive_frequencies
        if fx <= 0 or fy <= 0:
            raise ValueError("drive frequencies must be positive")
        if fx == fy:
            raise ValueError("drive frequencies must differ")
        if min(self.drive_amplitudes) <= 0 or min(self.selection_gradient) <= 0:
            raise ValueError("amplitudes and gradients must be positive")
        ratio = Fraction(fx / fy).limit_denominator(64)
        if abs(fx / fy - float(ratio)) > 1e-9 * (fx / fy):
            raise ValueError("frequency ratio must be a small rational number")
        duration = ratio.numerator / fx
        n_samples = self.sample_rate * duration
        if abs(n_samples - round(n_samples)) > 1e-6:
            raise ValueError("sample_rate times frame duration must be an integer")
        coils = np.asarray(self.coil_sensitivities, dtype=np.float64)
        if coils.ndim != 2 or coils.shape[1] != 2 or coils.shape[0] < 1:
            raise ValueError("coil_sensitivities must be an (n_coils, 2) array")
        coils.setflags(write=False)
        object.__setattr__(self, "coil_sensitivities", coils)
        object.__setattr__(self, "_frame_duration", duration)
        object.__setattr__(self, "_samples_per_frame", round(n_samples))

    @property
    def frame_duration(self) -> float:
        return self._frame_duration

    @property
    def samples_per_frame(self) -> int:
        return self._samples_per_frame

    @property
    def n_coils(self) -> int:
        return self.coil_sensitivities.shape[0]

    @property
    def sample_dt(self) -> float:
        return 1.0 / self.sample_rate


@dataclass(frozen=True)
class PhantomMotion:
    """Disk of constant concentration orbiting the field-of-view center."""

    disk_radius: float
    orbit_radius: float
    frames_per_rotation: float
    amplitude: float = 1.0
    initial_angle: float = 0.0

    def __post_init__(self):
        if self.disk_radius <= 0:
            raise ValueError("disk_radius must be positive")
        if self.orbit_radius < 0:
            raise ValueError("orbit_radius must be >= 0")
        if not self.frames_per_rotation > 0:
            raise ValueError("frames_per_rotation must be positive (inf = static)")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")

    @property
    def is_static(self) -> bool:
        return math.isinf(self.frames_per_rotation)


def default_scanner(samples_per_frame: int = 1632) -> ScannerConfig:
    """Desk-scale scanner: 16/17 kHz drives, 2 coils, 1 ms frames."""
    if samples_per_frame % MOTION_STEPS_PER_FRAME != 0:
        raise ValueError("samples_per_frame must be a multiple of 32")
    return ScannerConfig(
        drive_frequencies=(16_000.0, 17_000.0),
        drive_amplitudes=(0.022, 0.022),
        selection_gradient=(2.0, 2.0),
        sample_rate=samples_per_frame * 1000.0,
    )


def ffp_trajectory(cfg: ScannerConfig, t):
    """Field-free-point position at time ``t`` (seconds); shape ``(..., 2)``."""
    t = np.asarray(t, dtype=np.float64)
    fx, fy = cfg.drive_frequencies
    ax, ay = cfg.drive_amplitudes
    gx, gy = cfg.selection_gradient
    x = (ax / gx) * np.sin(2.0 * np.pi * fx * t)
    y = (ay / gy) * np.sin(2.0 * np.pi * fy * t)
    return np.stack([x, y], axis=-1)


def langevin(xi):
    """Langevin function ``coth(xi) - 1/xi``; odd, bounded by (-1, 1).

    Near zero the closed form loses precision, so a series expansion is used
    for ``|xi| <= 1e-4``.
    """
    xi_arr = np.asarray(xi, dtype=np.float64)
    scalar = xi_arr.ndim == 0
    xi_arr = np.atleast_1d(xi_arr)
    out = np.empty_like(xi_arr)
    small = np.abs(xi_arr) <= _LANGEVIN_SERIES_THRESHOLD
    xs = xi_arr[small]
    out[small] = xs / 3.0 - xs**3 / 45.0
    xl = xi_arr[~small]
    out[~small] = 1.0 / np.tanh(xl) - 1.0 / xl
    return float(out[0]) if scalar else out


def build_system_matrix(cfg: ScannerConfig, grid: Grid2D, chunk: int = 256) -> SystemMatrix:
    """Assemble the dense system matrix for one frame.

    For every pixel center the applied field is the selection gradient times
    the distance to the field-free point; the mean magnetic moment follows
    the Langevin curve along the field direction, and its time derivative
    (centered differences on the frame-periodic sample grid) projected onto
    each coil sensitivity gives the matrix entries.

    Column blocks are independent, so assembly is chunked over pixels.
    """
    n_t = cfg.samples_per_frame
    times = np.arange(n_t) / cfg.sample_rate
    ffp = ffp_trajectory(cfg, times)
    centers = grid.pixel_centers()
    gradient = np.asarray(cfg.selection_gradient)
    coils = cfg.coil_sensitivities
    n_coils = cfg.n_coils
    scale = cfg.signal_gain * cfg.particle_moment * grid.pixel_area

    entries = np.empty((n_t * n_coils, grid.n_pixels))
    rows = entries.reshape(n_t, n_coils, grid.n_pixels)
    for start in range(0, grid.n_pixels, chunk):
        stop = min(start + chunk, grid.n_pixels)
        # (n_t, m, 2) applied field at each pixel of the chunk
        h = gradient * (centers[None, start:stop, :] - ffp[:, None, :])
        h_norm = np.linalg.norm(h, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(h_norm[..., None] > 0.0, h / h_norm[..., None], 0.0)
        moment = langevin(cfg.langevin_beta * h_norm)[..., None] * unit
        dm = (np.roll(moment, -1, axis=0) - np.roll(moment, 1, axis=0)) * (
            0.5 * cfg.sample_rate
        )
        rows[:, :, start:stop] = -scale * np.einsum("tmc,rc->trm", dm, coils)
    return SystemMatrix(entries=entries, n_coils=n_coils, sample_dt=cfg.sample_dt)


def _disk_center(motion: PhantomMotion, time_fraction: float) -> tuple[float, float]:
    angle = motion.initial_angle
    if not motion.is_static:
        angle += 2.0 * np.pi * time_fraction
    return (
        motion.orbit_radius * math.cos(angle),
        motion.orbit_radius * math.sin(angle),
    )


def phantom_state(motion: PhantomMotion, grid: Grid2D, time_fraction: float) -> np.ndarray:
    """Rasterized disk concentration at a given fraction of one rotation."""
    reach = motion.orbit_radius + motion.disk_radius
    sx, sy = grid.origin_shift
    if reach > 0.5 * grid.fov_width - abs(sx) or reach > 0.5 * grid.fov_height - abs(sy):
        raise ValueError("phantom disk leaves the field of view")
    cx, cy = _disk_center(motion, time_fraction)
    centers = grid.pixel_centers()
    inside = (centers[:, 0] - cx) ** 2 + (centers[:, 1] - cy) ** 2 <= motion.disk_radius**2
    return np.where(inside, motion.amplitude, 0.0)


def forward_voltages(matrix: SystemMatrix, states: np.ndarray) -> np.ndarray:
    """Voltages of one frame whose concentration steps through ``states``.

    ``states`` has one row per motion step; each row drives the matching
    contiguous block of time samples.  Linear in ``states``.
    """
    states = np.asarray(states, dtype=np.float64)
    n_steps = states.shape[0]
    if matrix.n_samples % n_steps != 0:
        raise ValueError("motion steps must evenly divide the samples per frame")
    block = (matrix.n_samples // n_steps) * matrix.n_coils
    out = np.empty(matrix.rows)
    for j in range(n_steps):
        out[j * block : (j + 1) * block] = (
            matrix.entries[j * block : (j + 1) * block] @ states[j]
        )
    return out


@dataclass(frozen=True)
class SimulatedAcquisition:
    """Dataset plus the generation byproducts needed for persistence."""

    dataset: DynamicDataset
    truth_states: np.ndarray  # (n_frames * MOTION_STEPS_PER_FRAME, n_pixels)
    noise_norms: tuple[float, ...]

    @property
    def truth_states_per_frame(self) -> int:
        return MOTION_STEPS_PER_FRAME


def generate_dataset(
    cfg: ScannerConfig,
    grid_recon: Grid2D,
    grid_fine: Grid2D,
    motion: PhantomMotion,
    n_frames: int,
    snr: float | None = 10.0,
    seed: int = 0,
    subproblems_per_frame: int = 1,
) -> SimulatedAcquisition:
    """Simulate a dynamic acquisition of a rotating disk.

    Data are computed on ``grid_fine`` (at least twice the resolution of
    ``grid_recon`` and sub-pixel shifted), the returned dataset carries the
    system matrix on ``grid_recon``.  White Gaussian noise is scaled per
    frame so that ``norm(noise) = norm(signal) / snr`` exactly; ``snr=None``
    disables noise.  Deterministic for a fixed ``seed``.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if snr is not None and snr <= 0:
        raise ValueError("snr must be positive")
    if grid_fine.nx < 2 * grid_recon.nx or grid_fine.ny < 2 * grid_recon.ny:
        raise ValueError("fine grid must have at least twice the resolution")
    if grid_fine.origin_shift == (0.0, 0.0):
        raise ValueError("fine grid needs a sub-pixel origin_shift")
    n_t = cfg.samples_per_frame
    if n_t % MOTION_STEPS_PER_FRAME != 0:
        raise ValueError("samples per frame must be a multiple of 32")
    if MOTION_STEPS_PER_FRAME % subproblems_per_frame != 0:
        raise ValueError("subproblems_per_frame must divide 32")

    matrix_fine = build_system_matrix(cfg, grid_fine)
    matrix_recon = build_system_matrix(cfg, grid_recon)
    partition = TimePartition(n_frames, n_t, subproblems_per_frame)

    rng = np.random.default_rng(seed)
    steps = MOTION_STEPS_PER_FRAME
    frames = np.empty((n_frames, matrix_fine.rows))
    truth_states = np.empty((n_frames * steps, grid_recon.n_pixels))
    noise_norms = []
    for k in range(n_frames):
        fine_states = np.empty((steps, grid_fine.n_pixels))
        for j in range(steps):
            step = k * steps + j
            fraction = 0.0 if motion.is_static else step / (steps * motion.frames_per_rotation)
            fine_states[j] = phantom_state(motion, grid_fine, fraction)
            truth_states[step] = phantom_state(motion, grid_recon, fraction)
        clean = forward_voltages(matrix_fine, fine_states)
        if snr is None:
            frames[k] = clean
            noise_norms.append(0.0)
        else:
            draw = rng.standard_normal(clean.size)
            noise = draw * (np.linalg.norm(clean) / (snr * np.linalg.norm(draw)))
            frames[k] = clean + noise
            noise_norms.append(float(np.linalg.norm(noise)))

    per_sub = steps // subproblems_per_frame
    truth = ConcentrationSequence(truth_states[::per_sub])
    dataset = DynamicDataset(
        system_matrix=matrix_recon,
        partition=partition,
        frames=frames,
        grid=grid_recon,
        ground_truth=truth,
        snr=snr,
    )
    return SimulatedAcquisition(
        dataset=dataset, truth_states=truth_states, noise_norms=tuple(noise_norms)
    )
