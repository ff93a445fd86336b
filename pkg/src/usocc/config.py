"""Run configuration: one JSON document per run, with dotted-path overrides.

Unknown keys and out-of-range values raise :class:`ConfigError` naming the
offending field, e.g. ``train.learning_rate``.
"""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields

from .geometry import Box, TrajectoryKind, make_trajectory
from .network import EncodingConfig, InputKind, NetworkConfig, default_config
from .phantom import PhantomSpec, sphere_phantom, vertebra_phantom
from .training import LabelMode, TrainConfig, TransmittanceParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrajectoryConfig:
    kind: str = "row"
    n_frames: int = 32
    extent: dict = field(default_factory=lambda: {"lo": [0.0, 0.0, 0.0], "hi": [1.0, 1.0, 1.0]})
    scanlines_per_frame: int = 32
    samples_per_scanline: int = 64

    def build(self):
        box = Box(tuple(self.extent["lo"]), tuple(self.extent["hi"]))
        return make_trajectory(TrajectoryKind(self.kind), self.n_frames, box,
                               scanlines_per_frame=self.scanlines_per_frame,
                               samples_per_scanline=self.samples_per_scanline)


@dataclass(frozen=True)
class DatasetConfig:
    label_mode: str = "annotated"
    drop_occluded_occupied: bool = True


@dataclass(frozen=True)
class ExtractionConfig:
    resolution: int = 64
    smooth_sigma: float = 1.0
    smooth_radius: int = 3
    gt_resolution: int = 128


@dataclass(frozen=True)
class MetricsConfig:
    n_points: int = 30000
    cube_size_mm: float = 60.0


@dataclass(frozen=True)
class FinetuneConfig:
    fraction: float = 0.01
    iterations: int = 100
    n_frozen: int = 2
    learning_rate: float = 1e-4


@dataclass(frozen=True)
class AblationConfig:
    seeds: tuple = (0, 1, 2)
    methods: tuple = ("ON-100", "UltrON-10", "UltrON-5", "UltrON-PlainBCE-10")


def _all_kinds():
    return [TrajectoryConfig(kind=k.value) for k in TrajectoryKind]


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    output_dir: str = "runs/default"
    phantom: dict = field(default_factory=lambda: {"preset": "vertebra", "variant": "A"})
    finetune_phantom: dict = field(default_factory=lambda: {"preset": "vertebra", "variant": "B"})
    trajectories: tuple = field(default_factory=lambda: tuple(_all_kinds()))
    transmittance: TransmittanceParams = field(default_factory=TransmittanceParams)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    baseline_network: NetworkConfig = field(default_factory=lambda: default_config(InputKind.COORDINATES))
    train: TrainConfig = field(default_factory=TrainConfig)
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def phantom_spec(self, which: str = "phantom") -> PhantomSpec:
        return resolve_phantom(getattr(self, which))

    def build_trajectories(self):
        return [t.build() for t in self.trajectories]

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "trajectories":
                d[f.name] = [asdict(t) for t in v]
            elif isinstance(v, (NetworkConfig, TrainConfig)):
                d[f.name] = v.to_dict()
            elif hasattr(v, "__dataclass_fields__"):
                d[f.name] = _plain(asdict(v))
            else:
                d[f.name] = copy.deepcopy(v)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _plain(d):
    return json.loads(json.dumps(d))


def resolve_phantom(d: dict) -> PhantomSpec:
    d = dict(d)
    preset = d.pop("preset", None)
    if preset is None:
        return PhantomSpec.from_dict(d)
    if preset == "vertebra":
        return vertebra_phantom(d.pop("variant", "A"), **d)
    if preset == "sphere":
        return sphere_phantom(**d)
    raise ConfigError(f"phantom.preset: unknown preset {preset!r}")


_SECTIONS = {
    "transmittance": TransmittanceParams,
    "dataset": DatasetConfig,
    "extraction": ExtractionConfig,
    "metrics": MetricsConfig,
    "finetune": FinetuneConfig,
    "ablation": AblationConfig,
    "train": TrainConfig,
}


def _build(cls, name, value):
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: expected an object")
    known = {f.name for f in fields(cls)}
    for k in value:
        if k not in known:
            raise ConfigError(f"{name}.{k}: unknown field")
    try:
        return cls(**value)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        raise ConfigError(msg if msg.startswith(name + ".") else f"{name}: {msg}") from None


def _network(name, value):
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: expected an object")
    value = dict(value)
    enc = value.pop("encoding", None)
    known = {f.name for f in fields(NetworkConfig)}
    for k in value:
        if k not in known:
            raise ConfigError(f"{name}.{k}: unknown field")
    try:
        if enc is not None:
            value["encoding"] = EncodingConfig(**enc)
        return NetworkConfig(**value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def from_dict(d: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    for k in d:
        if k not in known:
            raise ConfigError(f"{k}: unknown field")
    kw = {}
    for k, v in d.items():
        if k in _SECTIONS:
            if k == "ablation":
                v = {kk: tuple(vv) if isinstance(vv, list) else vv for kk, vv in v.items()}
            kw[k] = _build(_SECTIONS[k], k, v)
        elif k in ("network", "baseline_network"):
            kw[k] = _network(k, v)
        elif k == "trajectories":
            if not isinstance(v, (list, tuple)) or not v:
                raise ConfigError("trajectories: at least one trajectory is required")
            kw[k] = tuple(_build(TrajectoryConfig, f"trajectories[{i}]", t) for i, t in enumerate(v))
        else:
            kw[k] = v
    cfg = RunConfig(**kw)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ConfigError("seed: must be a non-negative integer")
    if not cfg.trajectories:
        raise ConfigError("trajectories: at least one trajectory is required")
    for i, t in enumerate(cfg.trajectories):
        try:
            t.build()
        except ValueError as exc:
            raise ConfigError(f"trajectories[{i}]: {exc}") from None
        if t.scanlines_per_frame < 1 or t.samples_per_scanline < 1:
            raise ConfigError(f"trajectories[{i}]: scanline and sample counts must be >= 1")
    for which in ("phantom", "finetune_phantom"):
        try:
            cfg.phantom_spec(which)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"{which}: {exc}") from None
    try:
        LabelMode(cfg.dataset.label_mode)
    except ValueError:
        raise ConfigError(f"dataset.label_mode: unknown mode {cfg.dataset.label_mode!r}") from None
    if cfg.network.input_kind is not InputKind.ACOUSTIC_FEATURES:
        raise ConfigError("network.input_kind: must be acoustic_features")
    if cfg.baseline_network.input_kind is not InputKind.COORDINATES:
        raise ConfigError("baseline_network.input_kind: must be coordinates")
    ex = cfg.extraction
    if ex.resolution < 2 or ex.gt_resolution < 2:
        raise ConfigError("extraction.resolution: must be >= 2")
    if ex.smooth_sigma < 0:
        raise ConfigError("extraction.smooth_sigma: must be >= 0")
    if cfg.metrics.n_points < 1:
        raise ConfigError("metrics.n_points: must be >= 1")
    if cfg.metrics.cube_size_mm <= 0:
        raise ConfigError("metrics.cube_size_mm: must be > 0")
    ft = cfg.finetune
    if not 0 < ft.fraction <= 1:
        raise ConfigError("finetune.fraction: must be in (0, 1]")
    if ft.iterations < 0:
        raise ConfigError("finetune.iterations: must be >= 0")
    if not 0 <= ft.n_frozen <= cfg.network.n_layers:
        raise ConfigError("finetune.n_frozen: out of range")
    if ft.learning_rate <= 0:
        raise ConfigError("finetune.learning_rate: must be > 0")
    from .experiment import METHODS
    for m in cfg.ablation.methods:
        if m not in METHODS:
            raise ConfigError(f"ablation.methods: unknown method {m!r}")
    if not cfg.ablation.seeds:
        raise ConfigError("ablation.seeds: at least one seed is required")


def apply_overrides(d: dict, overrides) -> dict:
    """Apply ``a.b.c=value`` strings; values are parsed as JSON when possible."""
    d = copy.deepcopy(d)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = d
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"{key}: no such section {p!r}")
            node = node[p]
        node[parts[-1]] = value
    return d


PRESETS = {
    # a few minutes per model on one laptop core
    "desk": {"train": {"iterations": 5000, "precision": "float32"},
             "extraction": {"resolution": 64}},
    "full": {"train": {"iterations": 50_000}},
}


def preset(name: str = "desk", **top) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}")
    d = RunConfig().to_dict()
    for section, vals in PRESETS[name].items():
        d[section].update(vals)
    d.update(top)
    return from_dict(d)


def load(path, overrides=None) -> RunConfig:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    base = RunConfig().to_dict()
    if "preset" in d:
        name = d.pop("preset")
        if name not in PRESETS:
            raise ConfigError(f"preset: unknown preset {name!r}")
        for section, vals in PRESETS[name].items():
            base[section].update(vals)
    for k, v in d.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict) and k not in ("phantom", "finetune_phantom"):
            base[k].update(v)
        else:
            base[k] = v
    return from_dict(apply_overrides(base, overrides))
