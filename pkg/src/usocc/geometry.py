"""Probe poses, sweep trajectories, scanline rays and unit-cube normalization.

Conventions
-----------
A probe pose maps probe-local axes to world axes. Local ``x`` is the
elevation axis (the direction the probe moves during a sweep), local ``y``
the lateral axis along the transducer face, local ``z`` the beam axis.
The translation is the centre of the transducer face.

Row sweeps move along world ``x``, column sweeps along world ``y``; both
enter the volume through the ``z = extent.lo[2]`` face and image towards
``+z``. Tilted sweeps are Row sweeps with the probe rotated by +/-10 degrees
about the sweep axis, which steers every beam inside the image plane.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

BEAM_AXIS = np.array([0.0, 0.0, 1.0])
LATERAL_AXIS = np.array([0.0, 1.0, 0.0])
TILT_DEGREES = 10.0


def rotation_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ValueError("pose needs a 3x3 rotation and a 3-vector translation")
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9) or np.linalg.det(R) < 0:
            raise ValueError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @property
    def beam_direction(self) -> np.ndarray:
        return self.rotation @ BEAM_AXIS

    def compose(self, other: "Pose") -> "Pose":
        """Return ``self * other`` (apply ``other`` first)."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    max_depth: float

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit length")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))
        object.__setattr__(self, "direction", d)

    def at(self, depths) -> np.ndarray:
        depths = np.asarray(depths, dtype=float)
        return self.origin + depths[..., None] * self.direction


@dataclass(frozen=True)
class Box:
    lo: tuple = (0.0, 0.0, 0.0)
    hi: tuple = (1.0, 1.0, 1.0)

    @property
    def size(self) -> np.ndarray:
        return np.asarray(self.hi, dtype=float) - np.asarray(self.lo, dtype=float)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.hi, dtype=float) + np.asarray(self.lo, dtype=float))

    def to_dict(self):
        return {"lo": list(map(float, self.lo)), "hi": list(map(float, self.hi))}


class TrajectoryKind(str, enum.Enum):
    ROW = "row"
    COLUMN = "column"
    TILTED_MINUS_10 = "tilted_minus_10"
    TILTED_PLUS_10 = "tilted_plus_10"


@dataclass(frozen=True)
class ScanTrajectory:
    kind: TrajectoryKind
    frames: tuple
    scanlines_per_frame: int
    samples_per_scanline: int
    aperture: float
    depth: float
    extent: Box = field(default_factory=Box)

    def __post_init__(self):
        if len(self.frames) == 0:
            raise ValueError("trajectory needs at least one frame")


def _base_rotation(kind: TrajectoryKind) -> np.ndarray:
    if kind is TrajectoryKind.COLUMN:
        return rotation_z(np.pi / 2)
    R = np.eye(3)
    if kind is TrajectoryKind.TILTED_MINUS_10:
        R = R @ rotation_x(np.deg2rad(-TILT_DEGREES))
    elif kind is TrajectoryKind.TILTED_PLUS_10:
        R = R @ rotation_x(np.deg2rad(TILT_DEGREES))
    return R


def make_trajectory(kind, n_frames: int, extent: Box = Box(), *,
                    scanlines_per_frame: int = 32,
                    samples_per_scanline: int = 64) -> ScanTrajectory:
    """Evenly spaced parallel frames sweeping ``extent``.

    With a single frame the probe sits at the centre of the entry face.
    """
    kind = TrajectoryKind(kind)
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    lo, hi = np.asarray(extent.lo, float), np.asarray(extent.hi, float)
    if np.any(hi - lo <= 0):
        raise ValueError(f"extent has zero volume: {extent}")
    if np.any(lo < 0) or np.any(hi > 1):
        raise ValueError(f"extent must lie inside the unit cube: {extent}")

    sweep = 1 if kind is TrajectoryKind.COLUMN else 0
    lateral = 1 - sweep
    if n_frames == 1:
        positions = np.array([0.5 * (lo[sweep] + hi[sweep])])
    else:
        positions = np.linspace(lo[sweep], hi[sweep], n_frames)

    R = _base_rotation(kind)
    frames = []
    for p in positions:
        t = np.empty(3)
        t[sweep] = p
        t[lateral] = 0.5 * (lo[lateral] + hi[lateral])
        t[2] = lo[2]
        frames.append(Pose(R, t))
    return ScanTrajectory(kind=kind, frames=tuple(frames),
                          scanlines_per_frame=scanlines_per_frame,
                          samples_per_scanline=samples_per_scanline,
                          aperture=float(hi[lateral] - lo[lateral]),
                          depth=float(hi[2] - lo[2]), extent=extent)


def frame_rays(pose: Pose, scanlines: int, depth: float, aperture: float = 1.0) -> list:
    """Parallel scanlines of a linear array, evenly spread across the face."""
    if scanlines < 1:
        raise ValueError("scanlines must be >= 1")
    if depth <= 0:
        raise ValueError("depth must be > 0")
    offsets = np.zeros(1) if scanlines == 1 else np.linspace(-aperture / 2, aperture / 2, scanlines)
    direction = pose.beam_direction
    lateral = pose.rotation @ LATERAL_AXIS
    return [Ray(pose.translation + o * lateral, direction, depth) for o in offsets]


@dataclass(frozen=True)
class SimilarityTransform:
    """``y = scale * x + translation`` with a uniform scale."""

    scale: float
    translation: np.ndarray

    def apply(self, points) -> np.ndarray:
        return self.scale * np.asarray(points, dtype=float) + self.translation

    def inverse(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.translation) / self.scale

    def to_dict(self):
        return {"scale": float(self.scale), "translation": [float(v) for v in self.translation]}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["scale"]), np.asarray(d["translation"], dtype=float))


def normalize_to_unit_cube(points) -> tuple:
    """Isotropically scale ``points`` so the longest side spans [0, 1].

    Shorter axes are centred in the cube.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("no points to normalize")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = float(np.max(hi - lo))
    if span == 0.0:
        raise ValueError("cannot normalize identical points")
    scale = 1.0 / span
    translation = 0.5 - scale * 0.5 * (lo + hi)
    transform = SimilarityTransform(scale, translation)
    out = np.clip(transform.apply(pts), 0.0, 1.0)
    return out, transform
