"""End-to-end runs: simulate, train a method, reconstruct, score."""
from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass, replace

import numpy as np

from .config import RunConfig
from .extraction import TriangleMesh, marching_cubes, sample_grid, smooth
from .geometry import SimilarityTransform
from .metrics import MetricsReport, mesh_metrics
from .network import InputKind, OccupancyModel
from .phantom import GroundTruth, PhantomSpec, field_function, ground_truth
from .samples import SampleSet
from .training import (LabelMode, LossKind, TrainConfig, TrainResult, build_dataset,
                       finetune, subsample, train)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Method:
    name: str
    input_kind: InputKind
    fraction: float
    loss_kind: LossKind


METHODS = {
    "ON-100": Method("ON-100", InputKind.COORDINATES, 1.0, LossKind.ATTENUATION_COMPENSATED),
    "UltrON-10": Method("UltrON-10", InputKind.ACOUSTIC_FEATURES, 0.10, LossKind.ATTENUATION_COMPENSATED),
    "UltrON-5": Method("UltrON-5", InputKind.ACOUSTIC_FEATURES, 0.05, LossKind.ATTENUATION_COMPENSATED),
    "UltrON-PlainBCE-10": Method("UltrON-PlainBCE-10", InputKind.ACOUSTIC_FEATURES, 0.10,
                                 LossKind.PLAIN_BCE),
}


def unit_transform(cfg: RunConfig) -> SimilarityTransform:
    """Millimetres -> unit cube for a cube of ``cube_size_mm`` per side."""
    return SimilarityTransform(1.0 / cfg.metrics.cube_size_mm, np.zeros(3))


def simulate(cfg: RunConfig, phantom: PhantomSpec | None = None) -> SampleSet:
    phantom = phantom or cfg.phantom_spec()
    return build_dataset(cfg.build_trajectories(), phantom, cfg.transmittance,
                         feature_seed=cfg.seed,
                         label_mode=LabelMode(cfg.dataset.label_mode),
                         drop_occluded_occupied=cfg.dataset.drop_occluded_occupied)


def truth(cfg: RunConfig, phantom: PhantomSpec | None = None) -> GroundTruth:
    return ground_truth(phantom or cfg.phantom_spec(), cfg.extraction.gt_resolution)


def init_model(cfg: RunConfig, input_kind: InputKind, seed: int) -> OccupancyModel:
    net = cfg.network if input_kind is InputKind.ACOUSTIC_FEATURES else cfg.baseline_network
    return OccupancyModel.initialize(net, seed)


def train_method(cfg: RunConfig, dataset: SampleSet, method: Method, seed: int,
                 model: OccupancyModel | None = None) -> tuple:
    """Returns ``(TrainResult, subset)`` for one entry of ``METHODS``."""
    subset = subsample(dataset, method.fraction, seed)
    tcfg = replace(cfg.train, supervision_fraction=method.fraction, loss_kind=method.loss_kind)
    model = model or init_model(cfg, method.input_kind, seed)
    return train(model, subset, tcfg, seed), subset


def reconstruct(cfg: RunConfig, model: OccupancyModel, phantom: PhantomSpec) -> TriangleMesh:
    """Grid-sample the model over the unit cube, smooth, and mesh the 0 level."""
    ex = cfg.extraction
    grid = sample_grid(model, field_function(phantom, cfg.seed), ex.resolution)
    return marching_cubes(smooth(grid, ex.smooth_sigma, ex.smooth_radius), 0.0)


def score(cfg: RunConfig, mesh: TriangleMesh, gt: GroundTruth, seed: int) -> MetricsReport:
    if mesh.is_empty:
        inf = float("inf")
        return MetricsReport(inf, inf, inf, inf, 0, seed, "mm")
    return mesh_metrics(mesh, gt.surface_mesh, cfg.metrics.n_points, seed, unit_transform(cfg))


def run_method(cfg, dataset, gt, phantom, method, seed):
    result, subset = train_method(cfg, dataset, method, seed)
    mesh = reconstruct(cfg, result.model, phantom)
    report = score(cfg, mesh, gt, seed)
    log.info("%s seed %d: CD %.3f mm HD %.3f mm", method.name, seed, report.cd, report.hd)
    return result, subset, mesh, report


def summarize(rows) -> list:
    """Median, mean and population std per method over seeds, one row per method."""
    out = []
    for name in dict.fromkeys(r["method"] for r in rows):
        rs = [r for r in rows if r["method"] == name]
        row = {"phantom": rs[0]["phantom"], "method": name, "supervision": rs[0]["supervision"],
               "seed": "median"}
        for k in ("cd", "hd", "mad", "rmse"):
            vals = [r[k] for r in rs]
            row[k] = statistics.median(vals)
            row[k + "_mean"] = statistics.fmean(vals)
            row[k + "_std"] = statistics.pstdev(vals) if len(vals) > 1 else 0.0
        out.append(row)
    return out


def finetune_transfer(cfg: RunConfig, model: OccupancyModel, phantom_b: PhantomSpec,
                      dataset_b: SampleSet, gt_b: GroundTruth, seed: int) -> dict:
    """Score ``model`` on a new phantom before and after few-label fine-tuning."""
    before = score(cfg, reconstruct(cfg, model, phantom_b), gt_b, seed)
    ft = cfg.finetune
    tcfg = replace(cfg.train, learning_rate=ft.learning_rate)
    result = finetune(model, dataset_b, tcfg, ft.fraction, ft.iterations, ft.n_frozen, seed)
    after = score(cfg, reconstruct(cfg, result.model, phantom_b), gt_b, seed)
    return {"before": before, "after": after, "result": result}
