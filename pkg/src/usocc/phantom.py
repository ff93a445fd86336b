"""Analytic phantoms: ground-truth occupancy plus a per-tissue acoustic field.

The acoustic field plays the part of a learned neural field of attenuation,
reflection and scattering. Each tissue has a constant mean triple; a
stateless hash of ``(seed, x)`` adds reproducible per-point jitter so the
same point always gets the same features no matter which sweep samples it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .samples import SampleSet


@dataclass(frozen=True)
class AcousticProperties:
    alpha: float  # attenuation per unit length
    beta: float  # reflection, also applied per unit length along the beam
    phi: float  # scattering density

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        for name in ("beta", "phi"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.phi], dtype=float)

    def to_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "phi": self.phi}


# -- primitives ---------------------------------------------------------------

@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float

    def sdf(self, p):
        return np.linalg.norm(p - np.asarray(self.center, float), axis=-1) - self.radius

    def bounds(self):
        c = np.asarray(self.center, float)
        return c - self.radius, c + self.radius

    def to_dict(self):
        return {"type": "sphere", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Cuboid:
    lo: tuple
    hi: tuple

    def sdf(self, p):
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        c, h = 0.5 * (lo + hi), 0.5 * (hi - lo)
        q = np.abs(p - c) - h
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(q.max(axis=-1), 0.0)
        return outside + inside

    def bounds(self):
        return np.asarray(self.lo, float), np.asarray(self.hi, float)

    def to_dict(self):
        return {"type": "box", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class Capsule:
    a: tuple
    b: tuple
    radius: float

    def sdf(self, p):
        a, b = np.asarray(self.a, float), np.asarray(self.b, float)
        ab = b - a
        t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
        return np.linalg.norm(p - (a + t[..., None] * ab), axis=-1) - self.radius

    def bounds(self):
        a, b = np.asarray(self.a, float), np.asarray(self.b, float)
        return np.minimum(a, b) - self.radius, np.maximum(a, b) + self.radius

    def to_dict(self):
        return {"type": "capsule", "a": list(self.a), "b": list(self.b), "radius": self.radius}


@dataclass(frozen=True)
class UnionGroup:
    members: tuple

    def sdf(self, p):
        return np.min([m.sdf(p) for m in self.members], axis=0)

    def bounds(self):
        bs = [m.bounds() for m in self.members]
        return np.min([b[0] for b in bs], axis=0), np.max([b[1] for b in bs], axis=0)

    def to_dict(self):
        return {"type": "union", "members": [m.to_dict() for m in self.members]}


def primitive_from_dict(d):
    kind = d["type"]
    if kind == "sphere":
        return Sphere(tuple(d["center"]), float(d["radius"]))
    if kind == "box":
        return Cuboid(tuple(d["lo"]), tuple(d["hi"]))
    if kind == "capsule":
        return Capsule(tuple(d["a"]), tuple(d["b"]), float(d["radius"]))
    if kind == "union":
        return UnionGroup(tuple(primitive_from_dict(m) for m in d["members"]))
    raise ValueError(f"unknown primitive type {kind!r}")


# -- phantom ------------------------------------------------------------------

@dataclass(frozen=True)
class Tissue:
    properties: AcousticProperties
    occupied: bool = False


@dataclass(frozen=True)
class Solid:
    primitive: object
    tissue_id: str


@dataclass(frozen=True)
class PhantomSpec:
    """Union of tissue-tagged solids in the unit cube.

    Where solids overlap, the one listed last decides the tissue.
    """

    solids: tuple
    tissues: dict
    background: AcousticProperties
    noise_sigma: tuple = (0.0, 0.0, 0.0)
    name: str = "phantom"

    def __post_init__(self):
        occupied = [k for k, t in self.tissues.items() if t.occupied]
        if len(occupied) != 1:
            raise ValueError(f"exactly one tissue must be occupied, got {occupied}")
        for s in self.solids:
            if s.tissue_id not in self.tissues:
                raise ValueError(f"solid refers to unknown tissue {s.tissue_id!r}")
            lo, hi = s.primitive.bounds()
            if np.any(lo < 0) or np.any(hi > 1):
                raise ValueError(f"solid {s.primitive} leaves the unit cube")
        if len(self.noise_sigma) != 3 or min(self.noise_sigma) < 0:
            raise ValueError("noise_sigma must be three non-negative numbers")

    @property
    def occupied_tissue(self) -> str:
        return next(k for k, t in self.tissues.items() if t.occupied)

    def occupied_sdf(self, points) -> np.ndarray:
        """Signed distance to the union of occupied solids (negative inside)."""
        p = np.asarray(points, dtype=float)
        occ = [s.primitive.sdf(p) for s in self.solids if s.tissue_id == self.occupied_tissue]
        if not occ:
            return np.full(p.shape[:-1], np.inf)
        return np.min(occ, axis=0)

    def to_dict(self):
        return {
            "name": self.name,
            "solids": [{"primitive": s.primitive.to_dict(), "tissue": s.tissue_id}
                       for s in self.solids],
            "tissues": {k: {**t.properties.to_dict(), "occupied": t.occupied}
                        for k, t in self.tissues.items()},
            "background": self.background.to_dict(),
            "noise_sigma": list(self.noise_sigma),
        }

    @classmethod
    def from_dict(cls, d):
        tissues = {}
        for k, t in d["tissues"].items():
            t = dict(t)
            occ = bool(t.pop("occupied", False))
            tissues[k] = Tissue(AcousticProperties(**t), occ)
        solids = tuple(Solid(primitive_from_dict(s["primitive"]), s["tissue"]) for s in d["solids"])
        return cls(solids, tissues, AcousticProperties(**d["background"]),
                   tuple(float(v) for v in d.get("noise_sigma", (0, 0, 0))),
                   d.get("name", "phantom"))


def occupancy(spec: PhantomSpec, points) -> np.ndarray:
    """Vectorised occupancy indicator, int8 array of 0/1."""
    return (spec.occupied_sdf(points) < 0).astype(np.int8)


def occupancy_at(spec: PhantomSpec, x) -> int:
    return int(occupancy(spec, np.asarray(x, float)[None])[0])


def tissue_means(spec: PhantomSpec, points) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    out = np.broadcast_to(spec.background.as_array(), p.shape[:-1] + (3,)).copy()
    for s in spec.solids:
        inside = s.primitive.sdf(p) < 0
        out[inside] = spec.tissues[s.tissue_id].properties.as_array()
    return out


_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _splitmix(z: np.ndarray) -> np.ndarray:
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hash_normal(points, seed: int, channels: int = 3) -> np.ndarray:
    """Standard normal draws that are a pure function of ``(seed, point)``."""
    p = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    p = p + 0.0  # fold -0.0 into +0.0
    bits = p.view(np.uint64)
    with np.errstate(over="ignore"):
        h = _splitmix(np.full(len(p), np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))
        for k in range(3):
            h = _splitmix(h ^ bits[:, k])
        out = np.empty((len(p), channels))
        for c in range(channels):
            a = _splitmix(h + np.uint64(2 * c + 1))
            b = _splitmix(a)
            u1 = ((a >> np.uint64(11)).astype(np.float64) + 0.5) / 2.0**53
            u2 = ((b >> np.uint64(11)).astype(np.float64) + 0.5) / 2.0**53
            out[:, c] = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    return out.reshape(np.shape(points)[:-1] + (channels,))


def features(spec: PhantomSpec, points, seed: int = 0) -> np.ndarray:
    """Acoustic triple (alpha, beta, phi) at each point, jittered and clamped."""
    p = np.asarray(points, dtype=float)
    theta = tissue_means(spec, p)
    sigma = np.asarray(spec.noise_sigma, dtype=float)
    if np.any(sigma > 0):
        theta = theta + sigma * hash_normal(p, seed)
    theta[..., 0] = np.maximum(theta[..., 0], 0.0)
    theta[..., 1:] = np.clip(theta[..., 1:], 0.0, 1.0)
    return theta


def features_at(spec: PhantomSpec, x, rng_seed: int = 0) -> AcousticProperties:
    a, b, f = features(spec, np.asarray(x, float)[None], rng_seed)[0]
    return AcousticProperties(float(a), float(b), float(f))


def field_function(spec: PhantomSpec, seed: int = 0) -> Callable[[np.ndarray], np.ndarray]:
    """Closure ``points -> (N, 3)`` features, the form the ray integrator takes."""
    return lambda pts: features(spec, pts, seed)


# -- ground truth -------------------------------------------------------------

@dataclass
class GroundTruth:
    spec: PhantomSpec
    surface_mesh: object
    resolution: int

    def occupancy(self, points):
        return occupancy(self.spec, points)

    @property
    def cell_size(self) -> float:
        return 1.0 / (self.resolution - 1)


def ground_truth(spec: PhantomSpec, resolution: int = 128) -> GroundTruth:
    """Extract the occupied surface from the analytic signed distance."""
    from .extraction import grid_nodes, marching_cubes, OccupancyGrid

    nodes = grid_nodes((resolution,) * 3)
    values = -spec.occupied_sdf(nodes.reshape(-1, 3)).reshape((resolution,) * 3)
    grid = OccupancyGrid(values, origin=np.zeros(3), spacing=np.full(3, 1.0 / (resolution - 1)))
    return GroundTruth(spec, marching_cubes(grid, 0.0), resolution)


# -- annotation / tracking errors ----------------------------------------------

def _small_rotation(rng, max_angle):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K


def perturb_labels(samples: SampleSet, flip_rate: float, pose_noise: float,
                   rng_seed: int = 0, phantom: PhantomSpec | None = None,
                   feature_seed: int = 0) -> SampleSet:
    """Emulate annotation mistakes and tracking error.

    Each label flips independently with probability ``flip_rate``. Each frame
    receives one rigid offset (rotation about its centroid plus a shift)
    scaled so that no sample moves further than ``pose_noise``. If
    ``phantom`` is given, features are re-read at the moved coordinates.
    """
    if not 0.0 <= flip_rate < 0.5:
        raise ValueError("flip_rate must be in [0, 0.5)")
    if pose_noise < 0:
        raise ValueError("pose_noise must be >= 0")
    rng = np.random.default_rng(rng_seed)
    label = samples.label.copy()
    if flip_rate > 0:
        flip = rng.random(len(label)) < flip_rate
        label[flip] = 1 - label[flip]
    x = samples.x.copy()
    if pose_noise > 0:
        keys = samples.frame_keys
        for key in np.unique(keys):
            idx = np.flatnonzero(keys == key)
            pts = x[idx]
            c = pts.mean(axis=0)
            r = float(np.max(np.linalg.norm(pts - c, axis=1)))
            shift = rng.normal(size=3)
            shift *= rng.uniform(0, pose_noise / 2) / np.linalg.norm(shift)
            R = _small_rotation(rng, (pose_noise / 2) / r if r > 0 else 0.0)
            x[idx] = (pts - c) @ R.T + c + shift
    out = samples.replace(label=label, x=x)
    if phantom is not None and pose_noise > 0:
        out = out.replace(theta=features(phantom, x, feature_seed))
    return out


# -- presets --------------------------------------------------------------------

DEFAULT_TISSUES = {
    "bone": Tissue(AcousticProperties(alpha=40.0, beta=1.0, phi=0.9), occupied=True),
    "muscle": Tissue(AcousticProperties(alpha=1.0, beta=0.1, phi=0.6)),
}
DEFAULT_BACKGROUND = AcousticProperties(alpha=0.3, beta=0.02, phi=0.3)
DEFAULT_NOISE = (0.5, 0.02, 0.03)

# same tissue classes, shifted acoustic response (another specimen and gel batch)
VARIANT_B_TISSUES = {
    "bone": Tissue(AcousticProperties(alpha=30.0, beta=0.8, phi=0.75), occupied=True),
    "muscle": Tissue(AcousticProperties(alpha=1.4, beta=0.15, phi=0.5)),
}
VARIANT_B_BACKGROUND = AcousticProperties(alpha=0.5, beta=0.04, phi=0.4)

_VARIANTS = {
    # body half-length along y, body radius, body centre, spinous process half-width
    "A": dict(half_len=0.16, radius=0.13, center=(0.5, 0.5, 0.62), spine=0.05, wing=0.30),
    "B": dict(half_len=0.13, radius=0.15, center=(0.48, 0.52, 0.64), spine=0.06, wing=0.26),
}


def vertebra_phantom(variant: str = "A", noise_sigma=DEFAULT_NOISE) -> PhantomSpec:
    """Vertebra-like solid: capsule body with a spinous and a transverse process.

    The spinous process points towards the probe, so it shadows part of the
    body beneath it. Variants share tissues and topology but differ in size
    and placement, standing in for two vertebrae of the same anatomy.
    """
    v = _VARIANTS[variant]
    cx, cy, cz = v["center"]
    r, h = v["radius"], v["half_len"]
    body = Capsule((cx, cy - h, cz), (cx, cy + h, cz), r)
    s = v["spine"]
    spinous = Cuboid((cx - s, cy - s, cz - r - 0.28), (cx + s, cy + s, cz - r + 0.02))
    w = v["wing"]
    transverse = Cuboid((cx - w, cy - 0.04, cz - r - 0.04), (cx + w, cy + 0.04, cz - r + 0.04))
    muscle = Sphere((0.2, 0.22, 0.3), 0.1)
    return PhantomSpec(
        solids=(Solid(muscle, "muscle"), Solid(UnionGroup((body, spinous, transverse)), "bone")),
        tissues=dict(VARIANT_B_TISSUES if variant == "B" else DEFAULT_TISSUES),
        background=VARIANT_B_BACKGROUND if variant == "B" else DEFAULT_BACKGROUND,
        noise_sigma=tuple(noise_sigma),
        name=f"vertebra_{variant}",
    )


def sphere_phantom(center=(0.5, 0.5, 0.5), radius=0.25, noise_sigma=(0.0, 0.0, 0.0)) -> PhantomSpec:
    return PhantomSpec(
        solids=(Solid(Sphere(tuple(center), radius), "bone"),),
        tissues=dict(DEFAULT_TISSUES),
        background=DEFAULT_BACKGROUND,
        noise_sigma=tuple(noise_sigma),
        name="sphere",
    )


def empty_phantom() -> PhantomSpec:
    """No solids at all; every point is background."""
    return PhantomSpec((), dict(DEFAULT_TISSUES), DEFAULT_BACKGROUND, name="empty")
