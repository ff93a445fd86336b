"""Sample an occupancy field on a grid, smooth it and extract a triangle mesh."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage import measure

from .geometry import SimilarityTransform


@dataclass
class OccupancyGrid:
    values: np.ndarray
    origin: np.ndarray
    spacing: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.origin = np.asarray(self.origin, dtype=float)
        self.spacing = np.asarray(self.spacing, dtype=float)
        if self.values.ndim != 3:
            raise ValueError("grid values must be a 3-D array")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")

    @property
    def resolution(self) -> tuple:
        return self.values.shape


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) and (self.triangles.min() < 0 or
                                    self.triangles.max() >= len(self.vertices)):
            raise ValueError("triangle index out of range")

    def __len__(self):
        return len(self.triangles)

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    def edge_counts(self) -> np.ndarray:
        """Number of incident triangles for each distinct undirected edge."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        _, counts = np.unique(np.sort(e, axis=1), axis=0, return_counts=True)
        return counts

    def is_watertight(self) -> bool:
        return not self.is_empty and bool(np.all(self.edge_counts() == 2))

    def euler_characteristic(self) -> int:
        used = np.unique(self.triangles)
        return len(used) - len(self.edge_counts()) + len(self.triangles)

    def signed_volume(self) -> float:
        v = self.vertices[self.triangles]
        return float(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0)

    def cleaned(self, min_area: float = 1e-12) -> "TriangleMesh":
        """Drop near-zero-area triangles and unreferenced vertices."""
        tri = self.triangles[self.areas() > min_area]
        used, inv = np.unique(tri, return_inverse=True)
        return TriangleMesh(self.vertices[used], inv.reshape(-1, 3))


def grid_nodes(resolution, lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Node coordinates, shape ``resolution + (3,)``, corners included."""
    axes = [np.linspace(a, b, n) for a, b, n in zip(lo, hi, resolution)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def sample_grid(model, feature_source=None, resolution=(64, 64, 64), *,
                lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)) -> OccupancyGrid:
    """Evaluate the occupancy model at every node, shifted by -0.5.

    ``feature_source`` maps an (N, 3) array of points to (N, 3) acoustic
    features; coordinate models ignore it. The surface is the zero level set
    of the returned values.
    """
    if isinstance(resolution, int):
        resolution = (resolution,) * 3
    if min(resolution) < 2:
        raise ValueError("grid resolution must be >= 2 along every axis")
    nodes = grid_nodes(resolution, lo, hi).reshape(-1, 3)
    theta = feature_source(nodes) if feature_source is not None else None
    p = model.predict(model.raw_inputs(nodes, theta))
    spacing = (np.asarray(hi, float) - np.asarray(lo, float)) / (np.asarray(resolution) - 1)
    return OccupancyGrid(p.reshape(resolution) - 0.5, np.asarray(lo, float), spacing)


def smooth(grid: OccupancyGrid, sigma: float = 1.0, radius: int = 3) -> OccupancyGrid:
    """Truncated Gaussian blur in cell units; edges replicate the border value."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return OccupancyGrid(grid.values.copy(), grid.origin, grid.spacing)
    out = ndimage.gaussian_filter(grid.values, sigma=sigma, mode="nearest",
                                  truncate=radius / sigma)
    return OccupancyGrid(out, grid.origin, grid.spacing)


def marching_cubes(grid: OccupancyGrid, iso: float = 0.0) -> TriangleMesh:
    """Isosurface with the classic Lorensen case table.

    Values above ``iso`` count as inside; triangles wind so that normals
    point out of the inside region. A grid that never crosses ``iso`` gives
    an empty mesh.
    """
    v = grid.values
    if not (v.min() < iso < v.max()):
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    verts, faces, _, _ = measure.marching_cubes(v, level=iso, spacing=tuple(grid.spacing),
                                                method="lorensen")
    # skimage winds these faces with normals into the high-valued side
    return TriangleMesh(verts + grid.origin, faces[:, ::-1]).cleaned()


# -- mesh files -----------------------------------------------------------------

def write_ply(mesh: TriangleMesh, path, transform: SimilarityTransform | None = None):
    """ASCII PLY; ``transform`` (unit cube <- millimetres) goes in a comment line."""
    lines = ["ply", "format ascii 1.0"]
    if transform is not None:
        t = transform.translation
        lines.append(f"comment unit_cube_transform {float(transform.scale)!r} {float(t[0])!r} {float(t[1])!r} {float(t[2])!r}")
    lines += [f"element vertex {len(mesh.vertices)}", "property double x",
              "property double y", "property double z",
              f"element face {len(mesh.triangles)}", "property list uchar int vertex_indices",
              "end_header"]
    lines += [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_ply(path):
    """Returns ``(mesh, transform or None)``. Only the ASCII subset written above."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "ply":
        raise ValueError(f"{path}: not a PLY file")
    n_v = n_f = 0
    transform = None
    i = 1
    while lines[i] != "end_header":
        parts = lines[i].split()
        if parts[:2] == ["comment", "unit_cube_transform"]:
            vals = [float(s) for s in parts[2:6]]
            transform = SimilarityTransform(vals[0], np.array(vals[1:]))
        elif parts[:2] == ["element", "vertex"]:
            n_v = int(parts[2])
        elif parts[:2] == ["element", "face"]:
            n_f = int(parts[2])
        elif parts[0] == "format" and parts[1] != "ascii":
            raise ValueError(f"{path}: only ASCII PLY is supported")
        i += 1
    body = lines[i + 1:]
    verts = np.array([[float(s) for s in ln.split()[:3]] for ln in body[:n_v]]).reshape(-1, 3)
    faces = np.array([[int(s) for s in ln.split()[1:4]] for ln in body[n_v:n_v + n_f]],
                     dtype=np.int64).reshape(-1, 3)
    return TriangleMesh(verts, faces), transform


def write_obj(mesh: TriangleMesh, path, transform: SimilarityTransform | None = None):
    lines = []
    if transform is not None:
        t = transform.translation
        lines.append(f"# unit_cube_transform {float(transform.scale)!r} {float(t[0])!r} {float(t[1])!r} {float(t[2])!r}")
    lines += [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles.tolist()]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_obj(path):
    verts, faces, transform = [], [], None
    with open(path) as fh:
        for ln in fh:
            parts = ln.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(s) for s in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(s.split("/")[0]) - 1 for s in parts[1:4]])
            elif parts[:2] == ["#", "unit_cube_transform"]:
                vals = [float(s) for s in parts[2:6]]
                transform = SimilarityTransform(vals[0], np.array(vals[1:]))
    return TriangleMesh(np.array(verts).reshape(-1, 3), np.array(faces).reshape(-1, 3)), transform


def write_mesh(mesh, path, transform=None):
    if str(path).endswith(".obj"):
        write_obj(mesh, path, transform)
    else:
        write_ply(mesh, path, transform)


def read_mesh(path):
    return read_obj(path) if str(path).endswith(".obj") else read_ply(path)
