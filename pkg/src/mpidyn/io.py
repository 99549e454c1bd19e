"""Bit-exact persistence: binary matrices/vectors, dataset directories,
image exports, and validated JSON run configs.

Binary layout (all integers little-endian, payload IEEE-754 binary64
little-endian, row-major):

* matrix file: magic ``DIRM`` | u16 version=1 | u64 rows | u64 cols | payload
* vector file: magic ``DIRV`` | u16 version=1 | u64 length | payload

Files are written atomically (temp file + rename) so concurrent readers
never observe a torn file.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from mpidyn.model import (
    ConcentrationSequence,
    DynamicDataset,
    Grid2D,
    SystemMatrix,
    TimePartition,
)
from mpidyn.simulator import (
    MOTION_STEPS_PER_FRAME,
    PhantomMotion,
    ScannerConfig,
    SimulatedAcquisition,
)

__all__ = [
    "IoFormatError",
    "ConfigError",
    "write_matrix",
    "read_matrix",
    "write_vector",
    "read_vector",
    "save_dataset",
    "load_dataset",
    "export_image",
    "load_config",
    "config_hash",
    "write_manifest",
]

MATRIX_MAGIC = b"DIRM"
VECTOR_MAGIC = b"DIRV"
FORMAT_VERSION = 1
META_NAME = "meta.json"


class IoFormatError(ValueError):
    """A persisted file violates the expected byte layout."""


class ConfigError(ValueError):
    """A run configuration is malformed; the message names the field."""


def _atomic_write(path: Path, payload: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_matrix(path, matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise IoFormatError("matrix payload must be 2-dimensional")
    header = MATRIX_MAGIC + struct.pack("<HQQ", FORMAT_VERSION, *matrix.shape)
    _atomic_write(Path(path), header + np.ascontiguousarray(matrix, "<f8").tobytes())


def read_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 22 or raw[:4] != MATRIX_MAGIC:
        raise IoFormatError(f"{path}: bad magic, expected DIRM")
    version, rows, cols = struct.unpack("<HQQ", raw[4:22])
    if version != FORMAT_VERSION:
        raise IoFormatError(f"{path}: unsupported version {version}")
    expected = rows * cols * 8
    if expected != len(raw) - 22:
        raise IoFormatError(
            f"{path}: payload holds {len(raw) - 22} bytes, dims require {expected}"
        )
    return np.frombuffer(raw[22:], dtype="<f8").reshape(rows, cols).astype(np.float64)


def write_vector(path, vector: np.ndarray) -> None:
    vector = np.asarray(vector, dtype=np.float64)
    if vector.ndim != 1:
        raise IoFormatError("vector payload must be 1-dimensional")
    header = VECTOR_MAGIC + struct.pack("<HQ", FORMAT_VERSION, vector.size)
    _atomic_write(Path(path), header + np.ascontiguousarray(vector, "<f8").tobytes())


def read_vector(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 14 or raw[:4] != VECTOR_MAGIC:
        raise IoFormatError(f"{path}: bad magic, expected DIRV")
    version, length = struct.unpack("<HQ", raw[4:14])
    if version != FORMAT_VERSION:
        raise IoFormatError(f"{path}: unsupported version {version}")
    if length * 8 != len(raw) - 14:
        raise IoFormatError(
            f"{path}: payload holds {len(raw) - 14} bytes, length requires {length * 8}"
        )
    return np.frombuffer(raw[14:], dtype="<f8").astype(np.float64)


def _canonical_json(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(_canonical_json(config).encode()).hexdigest()


def _grid_meta(grid: Grid2D) -> dict:
    return {
        "nx": grid.nx,
        "ny": grid.ny,
        "fov_width": grid.fov_width,
        "fov_height": grid.fov_height,
        "origin_shift": list(grid.origin_shift),
    }


def save_dataset(
    directory,
    acquisition: SimulatedAcquisition,
    config: dict | None = None,
    seed: int | None = None,
    extra_meta: dict | None = None,
) -> Path:
    """Persist a simulated acquisition as a dataset directory.

    Layout: ``system.dirm`` (reconstruction operator), ``frame_XXX.dirv``
    per frame, ``truth_XXX.dirv`` per motion step, and ``meta.json`` with
    everything needed to reload or regenerate the dataset.
    """
    from mpidyn import __version__

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    dataset = acquisition.dataset
    write_matrix(directory / "system.dirm", dataset.system_matrix.entries)
    for k, frame in enumerate(dataset.frames):
        write_vector(directory / f"frame_{k:03d}.dirv", frame)
    for j, state in enumerate(acquisition.truth_states):
        write_vector(directory / f"truth_{j:03d}.dirv", state)
    meta = {
        "format_versions": {"matrix": FORMAT_VERSION, "vector": FORMAT_VERSION},
        "tool_version": __version__,
        "seed": seed,
        "config_hash": None if config is None else config_hash(config),
        "grid": _grid_meta(dataset.grid),
        "partition": {
            "n_frames": dataset.partition.n_frames,
            "samples_per_frame": dataset.partition.samples_per_frame,
            "subproblems_per_frame": dataset.partition.subproblems_per_frame,
        },
        "n_coils": dataset.system_matrix.n_coils,
        "sample_dt": dataset.system_matrix.sample_dt,
        "snr": dataset.snr,
        "noise_norms": list(acquisition.noise_norms),
        "truth_states_per_frame": acquisition.truth_states_per_frame,
        "config": config,
    }
    if extra_meta:
        meta.update(extra_meta)
    _atomic_write(directory / META_NAME, (_canonical_json(meta) + "\n").encode())
    return directory


def load_dataset(directory, subproblems_per_frame: int | None = None) -> DynamicDataset:
    """Load a dataset directory, optionally re-partitioned.

    The stored ground truth is finer than any supported subproblem size, so
    the states at the subinterval starts of the requested partition are an
    exact subset.
    """
    directory = Path(directory)
    meta_path = directory / META_NAME
    if not meta_path.exists():
        raise IoFormatError(f"{directory}: missing {META_NAME}")
    meta = json.loads(meta_path.read_text())
    part_meta = meta["partition"]
    s = subproblems_per_frame or part_meta["subproblems_per_frame"]
    partition = TimePartition(
        n_frames=part_meta["n_frames"],
        samples_per_frame=part_meta["samples_per_frame"],
        subproblems_per_frame=s,
    )
    matrix = SystemMatrix(
        entries=read_matrix(directory / "system.dirm"),
        n_coils=meta["n_coils"],
        sample_dt=meta["sample_dt"],
    )
    grid_meta = meta["grid"]
    grid = Grid2D(
        nx=grid_meta["nx"],
        ny=grid_meta["ny"],
        fov_width=grid_meta["fov_width"],
        fov_height=grid_meta["fov_height"],
        origin_shift=tuple(grid_meta["origin_shift"]),
    )
    frames = np.stack(
        [
            read_vector(directory / f"frame_{k:03d}.dirv")
            for k in range(partition.n_frames)
        ]
    )
    steps = meta["truth_states_per_frame"]
    truth = None
    if (directory / "truth_000.dirv").exists():
        if steps % s != 0:
            raise ConfigError(
                f"subproblems_per_frame={s} incompatible with stored truth granularity"
            )
        per_sub = steps // s
        states = [
            read_vector(directory / f"truth_{i * per_sub:03d}.dirv")
            for i in range(partition.n_subproblems)
        ]
        truth = ConcentrationSequence(np.stack(states))
    return DynamicDataset(
        system_matrix=matrix,
        partition=partition,
        frames=frames,
        grid=grid,
        ground_truth=truth,
        snr=meta.get("snr"),
    )


def export_image(values: np.ndarray, grid: Grid2D, path, format: str = "pgm16") -> None:
    """Export a concentration vector as a 16-bit PGM or a CSV of raw values.

    PGM scales linearly from the minimum (0) to the maximum (65535); a
    constant image maps to all zeros.  Rows run top-to-bottom with
    increasing y.
    """
    values = np.asarray(values, dtype=np.float64)
    if np.any(np.isnan(values)):
        raise ValueError("image contains NaN values")
    if values.shape != (grid.n_pixels,):
        raise ValueError("image length does not match the grid")
    image = values.reshape(grid.ny, grid.nx)
    path = Path(path)
    if format == "pgm16":
        low, high = image.min(), image.max()
        if high > low:
            scaled = np.round((image - low) / (high - low) * 65535.0)
        else:
            scaled = np.zeros_like(image)
        header = f"P5\n{grid.nx} {grid.ny}\n65535\n".encode()
        _atomic_write(path, header + scaled.astype(">u2").tobytes())
    elif format == "csv":
        lines = [",".join(f"{v:.17g}" for v in row) for row in image]
        _atomic_write(path, ("\n".join(lines) + "\n").encode())
    else:
        raise ValueError(f"unknown image format {format!r}")


# --- run configuration -----------------------------------------------------

_NUMBER = (int, float)


def _require(cond: bool, field: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{field}: {message}")


def _check_number(value, field, positive=False, nonnegative=False):
    _require(isinstance(value, _NUMBER) and not isinstance(value, bool), field, "must be a number")
    if positive:
        _require(value > 0, field, "must be positive")
    if nonnegative:
        _require(value >= 0, field, "must be >= 0")
    return float(value)


def _check_int(value, field, minimum=None):
    _require(isinstance(value, int) and not isinstance(value, bool), field, "must be an integer")
    if minimum is not None:
        _require(value >= minimum, field, f"must be >= {minimum}")
    return value


def _check_pair(value, field):
    _require(
        isinstance(value, list) and len(value) == 2,
        field,
        "must be a pair of numbers",
    )
    return (
        _check_number(value[0], f"{field}[0]"),
        _check_number(value[1], f"{field}[1]"),
    )


_SECTIONS = {
    "scanner": {
        "drive_frequencies",
        "drive_amplitudes",
        "selection_gradient",
        "sample_rate",
        "coil_sensitivities",
        "particle_moment",
        "langevin_beta",
        "signal_gain",
    },
    "grid": {"nx", "ny", "fov_width", "fov_height", "fine_nx", "fine_ny", "fine_shift"},
    "phantom": {
        "disk_radius",
        "orbit_radius",
        "frames_per_rotation",
        "amplitude",
        "initial_angle",
    },
    "noise": {"snr"},
    "partition": {"n_frames", "subproblems_per_frame", "subsizes"},
    "solver": {
        "algorithm",
        "algorithms",
        "lambda",
        "lambda_grid",
        "sweeps",
        "baseline_sweeps",
        "tau",
        "positivity",
        "reference_frame",
    },
    "estimator": {"method", "methods", "scale", "scales", "zeta_noise", "prior_lambda"},
    "seeds": {"data", "zeta_noise"},
}


def load_config(path) -> dict:
    """Load and validate a JSON run configuration; unknown keys are rejected."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    _require(isinstance(raw, dict), str(path), "top level must be an object")
    for section, content in raw.items():
        _require(section in _SECTIONS, section, "unknown section")
        _require(isinstance(content, dict), section, "must be an object")
        for key in content:
            _require(key in _SECTIONS[section], f"{section}.{key}", "unknown key")
    return raw


def scanner_from_config(config: dict) -> ScannerConfig:
    section = dict(config.get("scanner", {}))
    kwargs = {}
    for key in ("drive_frequencies", "drive_amplitudes", "selection_gradient"):
        if key in section:
            kwargs[key] = _check_pair(section[key], f"scanner.{key}")
    if "sample_rate" in section:
        kwargs["sample_rate"] = _check_number(
            section["sample_rate"], "scanner.sample_rate", positive=True
        )
    if "coil_sensitivities" in section:
        kwargs["coil_sensitivities"] = np.asarray(section["coil_sensitivities"], dtype=float)
    for key in ("particle_moment", "langevin_beta", "signal_gain"):
        if key in section:
            kwargs[key] = _check_number(section[key], f"scanner.{key}", positive=True)
    defaults = {
        "drive_frequencies": (16_000.0, 17_000.0),
        "drive_amplitudes": (0.022, 0.022),
        "selection_gradient": (2.0, 2.0),
        "sample_rate": 1_632_000.0,
    }
    for key, value in defaults.items():
        kwargs.setdefault(key, value)
    try:
        return ScannerConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"scanner: {exc}") from exc


def grids_from_config(config: dict) -> tuple[Grid2D, Grid2D]:
    section = dict(config.get("grid", {}))
    nx = _check_int(section.get("nx", 31), "grid.nx", minimum=1)
    ny = _check_int(section.get("ny", 31), "grid.ny", minimum=1)
    fov_w = _check_number(section.get("fov_width", 0.02), "grid.fov_width", positive=True)
    fov_h = _check_number(section.get("fov_height", 0.02), "grid.fov_height", positive=True)
    fine_nx = _check_int(section.get("fine_nx", 2 * nx + 1), "grid.fine_nx", minimum=2 * nx)
    fine_ny = _check_int(section.get("fine_ny", 2 * ny + 1), "grid.fine_ny", minimum=2 * ny)
    if "fine_shift" in section:
        shift = _check_pair(section["fine_shift"], "grid.fine_shift")
    else:
        shift = (0.5 * fov_w / fine_nx, 0.5 * fov_h / fine_ny)
    try:
        recon = Grid2D(nx=nx, ny=ny, fov_width=fov_w, fov_height=fov_h)
        fine = Grid2D(
            nx=fine_nx, ny=fine_ny, fov_width=fov_w, fov_height=fov_h, origin_shift=shift
        )
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc
    return recon, fine


def phantom_from_config(config: dict) -> PhantomMotion:
    section = dict(config.get("phantom", {}))
    fpr = section.get("frames_per_rotation", 7.0)
    if fpr is None:
        fpr = math.inf
    else:
        fpr = _check_number(fpr, "phantom.frames_per_rotation", positive=True)
    try:
        return PhantomMotion(
            disk_radius=_check_number(
                section.get("disk_radius", 0.0025), "phantom.disk_radius", positive=True
            ),
            orbit_radius=_check_number(
                section.get("orbit_radius", 0.0055), "phantom.orbit_radius", nonnegative=True
            ),
            frames_per_rotation=fpr,
            amplitude=_check_number(
                section.get("amplitude", 1.0), "phantom.amplitude", positive=True
            ),
            initial_angle=_check_number(
                section.get("initial_angle", 0.0), "phantom.initial_angle"
            ),
        )
    except ValueError as exc:
        raise ConfigError(f"phantom: {exc}") from exc


def snr_from_config(config: dict) -> float | None:
    snr = config.get("noise", {}).get("snr", 10.0)
    if snr is None:
        return None
    value = _check_number(snr, "noise.snr")
    _require(value > 0, "noise.snr", "must be positive or null")
    return value


def write_manifest(path, command: list[str], cfg_hash: str, seed: int | None) -> None:
    from mpidyn import __version__

    manifest = {
        "command": list(command),
        "config_hash": cfg_hash,
        "seed": seed,
        "tool_version": __version__,
    }
    _atomic_write(Path(path), (_canonical_json(manifest) + "\n").encode())
