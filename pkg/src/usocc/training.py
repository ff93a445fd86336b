"""Supervision from simulated sweeps and optimisation of the occupancy model."""
from __future__ import annotations

import enum
import logging
from dataclasses import asdict, dataclass

import numpy as np

from .geometry import ScanTrajectory, frame_rays
from .network import OccupancyModel, freeze_suffix
from .phantom import PhantomSpec, features, occupancy
from .samples import SampleSet
from .transmittance import _interp_rows, transmittance_rays

log = logging.getLogger(__name__)


class LossKind(str, enum.Enum):
    ATTENUATION_COMPENSATED = "attenuation_compensated"
    PLAIN_BCE = "plain_bce"


class LabelMode(str, enum.Enum):
    # bone is only marked where the beam still reaches it; shadowed bone reads as background
    ANNOTATED = "annotated"
    GROUND_TRUTH = "ground_truth"


@dataclass(frozen=True)
class TransmittanceParams:
    step: float = 1.0 / 256
    epsilon: float | None = None  # None: one step
    t0: float = 1.0
    quadrature: str = "midpoint"
    shadow_threshold: float = 0.05

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("transmittance.step must be > 0")
        if not 0.0 < self.t0 <= 1.0:
            raise ValueError("transmittance.t0 must be in (0, 1]")
        if not 0.0 <= self.shadow_threshold < 1.0:
            raise ValueError("transmittance.shadow_threshold must be in [0, 1)")


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 50_000
    batch_size: int = 256
    learning_rate: float = 1e-4
    decay_rate: float = 0.1
    decay_steps: int = 250_000
    supervision_fraction: float = 1.0
    loss_kind: LossKind = LossKind.ATTENUATION_COMPENSATED
    clamp_epsilon: float = 1e-6
    log_every: int = 50
    precision: str = "float64"

    def __post_init__(self):
        object.__setattr__(self, "loss_kind", LossKind(self.loss_kind))
        if self.precision not in ("float32", "float64"):
            raise ValueError("train.precision must be 'float32' or 'float64'")
        if self.learning_rate <= 0:
            raise ValueError("train.learning_rate must be > 0")
        if not 0.0 < self.supervision_fraction <= 1.0:
            raise ValueError("train.supervision_fraction must be in (0, 1]")
        if self.iterations < 0 or self.batch_size < 1 or self.decay_steps < 1:
            raise ValueError("train.iterations >= 0, batch_size >= 1 and decay_steps >= 1 required")
        if not 0.0 < self.clamp_epsilon < 0.5:
            raise ValueError("train.clamp_epsilon must be in (0, 0.5)")
        if self.log_every < 1:
            raise ValueError("train.log_every must be >= 1")

    def lr_at(self, step: int) -> float:
        return self.learning_rate * self.decay_rate ** (step / self.decay_steps)

    def to_dict(self):
        d = asdict(self)
        d["loss_kind"] = self.loss_kind.value
        return d


# -- dataset --------------------------------------------------------------------

def _trajectory_samples(traj: ScanTrajectory, sweep_id: int, phantom: PhantomSpec,
                        tp: TransmittanceParams, feature_seed: int):
    field = lambda pts: features(phantom, pts, feature_seed)  # noqa: E731
    origins, dirs, frame_id, line_id = [], [], [], []
    for f, pose in enumerate(traj.frames):
        for s, ray in enumerate(frame_rays(pose, traj.scanlines_per_frame, traj.depth, traj.aperture)):
            origins.append(ray.origin)
            dirs.append(ray.direction)
            frame_id.append(f)
            line_id.append(s)
    origins, dirs = np.array(origins), np.array(dirs)
    n = traj.samples_per_scanline
    depths = (np.arange(n) + 0.5) * traj.depth / n
    nodes, profile = transmittance_rays(origins, dirs, traj.depth, field, tp.step, tp.epsilon,
                                        tp.t0, tp.quadrature)
    t = _interp_rows(depths, nodes, profile)
    x = origins[:, None, :] + depths[None, :, None] * dirs[:, None, :]
    R = len(origins)
    return dict(
        x=x.reshape(-1, 3), transmittance=t.reshape(-1),
        sweep_id=np.full(R * n, sweep_id, dtype=np.int64),
        frame_id=np.repeat(frame_id, n).astype(np.int64),
        scanline_id=np.repeat(line_id, n).astype(np.int64),
        depth=np.tile(depths, R),
    )


_CUBE_TOL = 1e-9


def build_dataset(trajectories, phantom: PhantomSpec, tparams: TransmittanceParams = TransmittanceParams(),
                  *, feature_seed: int = 0, label_mode: LabelMode = LabelMode.ANNOTATED,
                  drop_occluded_occupied: bool = True, clip_to_cube: bool = True) -> SampleSet:
    """One sample per (frame, scanline, depth) node of every sweep.

    In ``annotated`` mode the label is the occupancy seen in the image: bone
    behind a shadow (T below the threshold) is marked background, and the
    attenuation-compensated loss is what keeps those points from pulling the
    model towards "empty". ``ground_truth`` labels are the phantom's own,
    optionally dropping occupied points an annotator could not have seen.
    Samples that leave the unit cube (tilted sweeps) are discarded unless
    ``clip_to_cube`` is off.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("need at least one trajectory")
    label_mode = LabelMode(label_mode)
    parts = []
    for sweep_id, traj in enumerate(trajectories):
        cols = _trajectory_samples(traj, sweep_id, phantom, tparams, feature_seed)
        x = cols["x"]
        keep = np.ones(len(x), dtype=bool)
        if clip_to_cube:
            keep &= np.all((x >= -_CUBE_TOL) & (x <= 1.0 + _CUBE_TOL), axis=1)
            x = np.clip(x, 0.0, 1.0)  # rounding from rotated poses
        occ = occupancy(phantom, x)
        visible = cols["transmittance"] >= tparams.shadow_threshold
        if label_mode is LabelMode.ANNOTATED:
            label = (occ.astype(bool) & visible).astype(np.int8)
        else:
            label = occ.copy()
            if drop_occluded_occupied:
                keep &= ~(occ.astype(bool) & ~visible)
        theta = features(phantom, x, feature_seed)
        part = SampleSet(x=x, theta=theta, label=label, transmittance=cols["transmittance"],
                         occupancy=occ, sweep_id=cols["sweep_id"], frame_id=cols["frame_id"],
                         scanline_id=cols["scanline_id"], depth=cols["depth"])
        parts.append(part.take(keep))
    return SampleSet.concatenate(parts)


def subsample(samples: SampleSet, fraction: float, rng_seed: int = 0) -> SampleSet:
    """Keep ``round(fraction * n)`` random samples of every frame, original order."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    if fraction == 1.0:
        return samples
    rng = np.random.default_rng(rng_seed)
    keys = samples.frame_keys
    order = np.argsort(keys, kind="stable")
    uniq, starts, counts = np.unique(keys[order], return_index=True, return_counts=True)
    chosen = []
    for s, c in zip(starts, counts):
        k = int(np.floor(fraction * c + 0.5))
        chosen.append(order[s + rng.choice(c, size=k, replace=False)])
    idx = np.sort(np.concatenate(chosen)) if chosen else np.zeros(0, dtype=np.int64)
    return samples.take(idx)


# -- loss -----------------------------------------------------------------------

def _effective(prob, label, t, kind):
    prob = np.asarray(prob, dtype=float)
    t = np.ones_like(prob) if LossKind(kind) is LossKind.PLAIN_BCE else np.broadcast_to(t, prob.shape)
    return prob, np.broadcast_to(np.asarray(label, dtype=float), prob.shape), t


def loss(prob, label, t, clamp_epsilon: float = 1e-6,
         kind: LossKind = LossKind.ATTENUATION_COMPENSATED):
    """Binary cross-entropy on ``t * prob``, clamped inside the logs."""
    p, y, t = _effective(prob, label, t, kind)
    q = np.clip(t * p, clamp_epsilon, 1.0 - clamp_epsilon)
    return -(y * np.log(q) + (1.0 - y) * np.log(1.0 - q))


def loss_grad(prob, label, t, clamp_epsilon: float = 1e-6,
              kind: LossKind = LossKind.ATTENUATION_COMPENSATED):
    """d loss / d prob. Zero wherever the clamp is active."""
    p, y, t = _effective(prob, label, t, kind)
    q = t * p
    active = (q > clamp_epsilon) & (q < 1.0 - clamp_epsilon)
    qc = np.clip(q, clamp_epsilon, 1.0 - clamp_epsilon)
    dq = -y / qc + (1.0 - y) / (1.0 - qc)
    return np.where(active, t * dq, 0.0)


# -- optimisation ---------------------------------------------------------------

class Adam:
    """Bias-corrected Adam over a list of arrays, updated in place."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, lr, trainable=None):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for i, (p, g) in enumerate(zip(params, grads)):
            if trainable is not None and not trainable[i]:
                continue
            m, v = self.m[i], self.v[i]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            denom = np.sqrt(v / c2)
            denom += self.eps
            p -= (lr / c1) * m / denom


class TrainingDiverged(RuntimeError):
    def __init__(self, step, state):
        super().__init__(f"loss became non-finite at step {step}")
        self.step = step
        self.state = state


@dataclass
class TrainResult:
    model: OccupancyModel
    trace: list  # (step, mean batch loss, lr)
    n_samples: int


def train(model: OccupancyModel, dataset: SampleSet, cfg: TrainConfig, rng_seed: int = 0,
          copy: bool = True) -> TrainResult:
    """Minibatch Adam with exponential step-size decay.

    ``cfg.supervision_fraction`` is *not* applied here; callers subsample
    first so the kept labels can be recorded.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    out_dtype = model.dtype
    model = model.astype(cfg.precision) if (copy or model.dtype != cfg.precision) else model
    rng = np.random.default_rng(rng_seed)
    raw = model.raw_inputs(dataset.x, dataset.theta)
    y = dataset.label.astype(model.dtype)
    t = dataset.transmittance.astype(model.dtype)
    params = model.params
    layer_mask = model.trainable_mask()
    trainable = [m for m in layer_mask for _ in (0, 1)]
    opt = Adam(params)
    trace = []
    running, count = 0.0, 0
    for step in range(cfg.iterations):
        idx = rng.integers(0, len(dataset), size=cfg.batch_size)
        enc = model.encode_inputs(raw[idx])
        p, cache = model.forward_cached(enc)
        batch_loss = float(loss(p, y[idx], t[idx], cfg.clamp_epsilon, cfg.loss_kind).mean())
        if not np.isfinite(batch_loss):
            raise TrainingDiverged(step, {"indices": idx, "prob": p, "loss": batch_loss,
                                          "lr": cfg.lr_at(step)})
        upstream = loss_grad(p, y[idx], t[idx], cfg.clamp_epsilon, cfg.loss_kind) / cfg.batch_size
        gw, gb = model.backward_cached(cache, p, upstream)
        grads = [g for pair in zip(gw, gb) for g in pair]
        lr = cfg.lr_at(step)
        opt.step(params, grads, lr, trainable)
        running += batch_loss
        count += 1
        if (step + 1) % cfg.log_every == 0 or step + 1 == cfg.iterations:
            trace.append((step + 1, running / count, lr))
            running, count = 0.0, 0
            if (step + 1) % (cfg.log_every * 20) == 0:
                log.info("step %d loss %.5f lr %.2e", step + 1, trace[-1][1], lr)
    if model.dtype != out_dtype:
        model = model.astype(out_dtype)
    return TrainResult(model, trace, len(dataset))


def finetune(model: OccupancyModel, new_dataset: SampleSet, cfg: TrainConfig | None = None,
             fraction: float = 0.01, iterations: int = 100, n_frozen: int = 2,
             rng_seed: int = 0) -> TrainResult:
    """Adapt a trained model to a new shape with its last layers frozen."""
    cfg = cfg or TrainConfig()
    frozen = freeze_suffix(model, n_frozen)
    subset = subsample(new_dataset, fraction, rng_seed)
    run_cfg = TrainConfig(**{**cfg.to_dict(), "iterations": iterations,
                             "supervision_fraction": fraction})
    return train(frozen, subset, run_cfg, rng_seed)
