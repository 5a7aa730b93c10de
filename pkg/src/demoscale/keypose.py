"""Key-pose detection on a demonstration's position trace.

A step is a key pose when the gripper changes state there, or when the
trajectory turns sharply while moving slowly. Turning is measured as the
angle between the windowed incoming and outgoing displacement vectors;
slowness is measured as pose density, the reciprocal of the mean pairwise
distance within the window (positions carry no velocity, so crowded
samples are the proxy for a slow hand).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, ValidationError
from .trajectory import Demonstration, extract_positions

STATIONARY_NORM = 1e-9  # below this a window arm is treated as zero motion
DENSITY_EPSILON = 1e-6  # keeps the density score finite for identical points


@dataclass(frozen=True)
class KeyPoseConfig:
    window_length: int = 11
    sharp_turn_threshold: float = 1.0  # radians
    dense_region_threshold: float = 200.0  # 1/meters

    def __post_init__(self):
        if self.window_length < 3 or self.window_length % 2 == 0:
            raise ConfigError("window_length must be odd and at least 3")
        if self.sharp_turn_threshold <= 0 or self.dense_region_threshold <= 0:
            raise ConfigError("thresholds must be positive")

    @property
    def half_window(self) -> int:
        return (self.window_length - 1) // 2


@dataclass(frozen=True)
class KeyPoseReport:
    """Sorted index lists; key poses = grasp_release ∪ (sharp_turn ∩ dense_region)."""

    grasp_release_indices: tuple[int, ...]
    sharp_turn_indices: tuple[int, ...]
    dense_region_indices: tuple[int, ...]
    key_poses_indices: tuple[int, ...] = field(default=())

    def __post_init__(self):
        combined = set(self.grasp_release_indices) | (
            set(self.sharp_turn_indices) & set(self.dense_region_indices)
        )
        expected = tuple(sorted(combined))
        if self.key_poses_indices == ():
            object.__setattr__(self, "key_poses_indices", expected)
        elif self.key_poses_indices != expected:
            raise ValidationError("key_poses_indices does not match the union/intersection rule")


def grasp_release_indices(demo: Demonstration) -> list[int]:
    """Indices where the gripper transitions; the index is the transition target."""
    g = demo.grippers
    changed = np.nonzero(g[1:] != g[:-1])[0] + 1
    return [int(i) for i in changed]


def _window_guard(points: np.ndarray, idx: int, window_length: int) -> int:
    if window_length < 3 or window_length % 2 == 0:
        raise ConfigError("window_length must be odd and at least 3")
    half = (window_length - 1) // 2
    if idx < half or idx > len(points) - 1 - half:
        raise ValidationError(
            f"index {idx} has no complete window of length {window_length} "
            f"in a trace of {len(points)} points"
        )
    return half


def compute_angle(points: np.ndarray, idx: int, window_length: int) -> float:
    """Turning angle at ``idx``: angle between the half-window in and out vectors.

    Returns 0 when either vector is (numerically) zero, so dwell points are
    caught by density rather than by spurious angles.
    """
    points = np.asarray(points, dtype=float)
    half = _window_guard(points, idx, window_length)
    u = points[idx] - points[idx - half]
    v = points[idx + half] - points[idx]
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu < STATIONARY_NORM or nv < STATIONARY_NORM:
        return 0.0
    cosine = float(np.dot(u, v)) / (nu * nv)
    return float(np.arccos(np.clip(cosine, -1.0, 1.0)))


def compute_density(points: np.ndarray, idx: int, window_length: int) -> float:
    """Density score at ``idx``: 1 / (mean pairwise distance in the window + eps)."""
    points = np.asarray(points, dtype=float)
    half = _window_guard(points, idx, window_length)
    window = points[idx - half : idx + half + 1]
    diffs = window[:, None, :] - window[None, :, :]
    dists = np.linalg.norm(diffs, axis=-1)
    iu = np.triu_indices(len(window), k=1)
    mean_pairwise = float(dists[iu].mean())
    return 1.0 / (mean_pairwise + DENSITY_EPSILON)


def detect_key_poses(demo: Demonstration, config: KeyPoseConfig | None = None) -> KeyPoseReport:
    """Run the full detector over one demonstration.

    Sharp-turn and dense-region checks run only where a complete window
    fits; grasp/release indices are kept regardless of position.
    """
    config = config or KeyPoseConfig()
    points = extract_positions(demo)
    n = len(points)
    if n < config.window_length:
        raise ConfigError(
            f"demonstration has {n} steps, shorter than window_length {config.window_length}"
        )
    half = config.half_window
    sharp, dense = [], []
    for idx in range(half, n - half):
        if compute_angle(points, idx, config.window_length) > config.sharp_turn_threshold:
            sharp.append(idx)
        if compute_density(points, idx, config.window_length) > config.dense_region_threshold:
            dense.append(idx)
    return KeyPoseReport(
        grasp_release_indices=tuple(grasp_release_indices(demo)),
        sharp_turn_indices=tuple(sharp),
        dense_region_indices=tuple(dense),
    )


# ---------------------------------------------------------------------------
# Report serialization, same header/record style as demonstration files.
# ---------------------------------------------------------------------------

_REPORT_FIELDS = (
    "grasp_release_indices",
    "sharp_turn_indices",
    "dense_region_indices",
    "key_poses_indices",
)


def write_report(report: KeyPoseReport, path: str | Path, demo_id: str = "demo") -> None:
    lines = [f"#keypose_report demo={demo_id}"]
    for name in _REPORT_FIELDS:
        values = getattr(report, name)
        lines.append(f"{name}=[{','.join(str(v) for v in values)}]")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_report(path: str | Path) -> KeyPoseReport:
    fields: dict[str, tuple[int, ...]] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"unrecognized report line {line!r}", lineno)
        name, value = line.split("=", 1)
        if name not in _REPORT_FIELDS:
            raise FormatError(f"unknown report field {name!r}", lineno)
        body = value.strip()[1:-1].strip()
        fields[name] = tuple(int(v) for v in body.split(",")) if body else ()
    missing = [f for f in _REPORT_FIELDS if f not in fields]
    if missing:
        raise FormatError(f"report file missing fields: {missing}")
    return KeyPoseReport(**fields)
