"""Surface distance metrics between a reconstruction and ground truth."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from .extraction import TriangleMesh

CSV_FIELDS = ("phantom", "method", "supervision", "cd", "hd", "mad", "rmse", "seed")
SUMMARY_FIELDS = CSV_FIELDS + tuple(f"{k}_{s}" for k in ("cd", "hd", "mad", "rmse") for s in ("mean", "std"))


@dataclass(frozen=True)
class MetricsReport:
    """Chamfer (symmetric mean), Hausdorff, mean absolute and RMS distances.

    MAD and RMSE pool the nearest-neighbour distances of both directions.
    """

    cd: float
    hd: float
    mad: float
    rmse: float
    n_points: int
    seed: int | None = None
    units: str = "unit_cube"

    def scaled(self, factor: float, units: str) -> "MetricsReport":
        return MetricsReport(self.cd * factor, self.hd * factor, self.mad * factor,
                             self.rmse * factor, self.n_points, self.seed, units)

    def to_dict(self):
        return asdict(self)

    def csv_row(self, phantom="", method="", supervision=1.0) -> dict:
        return {"phantom": phantom, "method": method, "supervision": supervision,
                "cd": self.cd, "hd": self.hd, "mad": self.mad, "rmse": self.rmse,
                "seed": self.seed}


def sample_surface(mesh: TriangleMesh, n: int, rng_seed: int = 0) -> np.ndarray:
    """Area-weighted uniform points on the mesh surface."""
    if mesh.is_empty:
        raise ValueError("cannot sample an empty mesh")
    if n < 1:
        raise ValueError("n must be >= 1")
    areas = mesh.areas()
    if areas.sum() <= 0:
        raise ValueError("mesh has zero surface area")
    rng = np.random.default_rng(rng_seed)
    tri = rng.choice(len(areas), size=n, p=areas / areas.sum())
    u, v = rng.random(n), rng.random(n)
    flip = u + v > 1
    u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
    a, b, c = (mesh.vertices[mesh.triangles[tri, k]] for k in range(3))
    return a + u[:, None] * (b - a) + v[:, None] * (c - a)


def nearest_distances(query, reference) -> np.ndarray:
    """Distance from each query point to its nearest reference point.

    The k-d tree only picks the neighbour; the distance is recomputed with
    a plain Euclidean norm so results do not depend on the tree internals.
    """
    query = np.asarray(query, dtype=float)
    reference = np.asarray(reference, dtype=float)
    _, idx = cKDTree(reference).query(query, k=1)
    return np.linalg.norm(query - reference[idx], axis=1)


def compute_metrics(pred_points, gt_points, seed: int | None = None) -> MetricsReport:
    pred = np.asarray(pred_points, dtype=float).reshape(-1, 3)
    gt = np.asarray(gt_points, dtype=float).reshape(-1, 3)
    if len(pred) == 0 or len(gt) == 0:
        raise ValueError("both point sets must be nonempty")
    d_pg = nearest_distances(pred, gt)
    d_gp = nearest_distances(gt, pred)
    pooled = np.concatenate([d_pg, d_gp])
    return MetricsReport(
        cd=float(0.5 * (d_pg.mean() + d_gp.mean())),
        hd=float(max(d_pg.max(), d_gp.max())),
        mad=float(pooled.mean()),
        rmse=float(np.sqrt(np.mean(pooled ** 2))),
        n_points=int(len(pred) + len(gt)),
        seed=seed,
    )


def mesh_metrics(pred: TriangleMesh, gt: TriangleMesh, n: int = 30000, seed: int = 0,
                 transform=None) -> MetricsReport:
    """Sample both meshes and compare; ``transform`` converts to millimetres."""
    report = compute_metrics(sample_surface(pred, n, seed), sample_surface(gt, n, seed + 1), seed)
    if transform is not None:
        report = report.scaled(1.0 / transform.scale, "mm")
    return report


def write_csv(rows, path=None, fields=CSV_FIELDS):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r.get(k, "") for k in fields})
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
