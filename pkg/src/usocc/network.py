"""Occupancy MLP in plain numpy with a hand-written backward pass.

Layout (defaults): the positionally encoded input goes through 8
affine+ReLU layers of width 128. Layer ``skip_at`` receives the previous
activation concatenated with the encoded input. A final affine layer maps
to one logit and a sigmoid gives the occupancy probability. The model
therefore has ``hidden_layers + 1`` affine layers.
"""
from __future__ import annotations

import copy
import enum
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ._io import load_npz, save_npz

CHECKPOINT_FORMAT = "usocc-checkpoint"
CHECKPOINT_VERSION = 1


class InputKind(str, enum.Enum):
    ACOUSTIC_FEATURES = "acoustic_features"
    COORDINATES = "coordinates"


@dataclass(frozen=True)
class EncodingConfig:
    num_frequencies: int = 6
    include_input: bool = True

    def __post_init__(self):
        if self.num_frequencies < 0:
            raise ValueError("num_frequencies must be >= 0")

    def output_dim(self, input_dim: int) -> int:
        return input_dim * (int(self.include_input) + 2 * self.num_frequencies)


def _floating(a):
    a = np.asarray(a)
    return a if a.dtype in (np.float32, np.float64) else a.astype(np.float64)


def encode(v, cfg: EncodingConfig) -> np.ndarray:
    """``[v, sin(2^0 pi v), cos(2^0 pi v), ..., sin(2^(L-1) pi v), cos(...)]``."""
    v = _floating(v)
    parts = [v] if cfg.include_input else []
    for k in range(cfg.num_frequencies):
        arg = (2.0 ** k) * np.pi * v
        parts.append(np.sin(arg))
        parts.append(np.cos(arg))
    if not parts:
        return np.zeros(v.shape[:-1] + (0,), dtype=v.dtype)
    return np.concatenate(parts, axis=-1)


@dataclass(frozen=True)
class NetworkConfig:
    input_kind: InputKind = InputKind.ACOUSTIC_FEATURES
    hidden_layers: int = 8
    hidden_width: int = 128
    skip_at: int | None = 4
    encoding: EncodingConfig = field(default_factory=EncodingConfig)
    input_dim: int = 3
    # per-channel multipliers bringing (alpha, beta, phi) to roughly [0, 1]
    feature_scale: tuple = (0.025, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "input_kind", InputKind(self.input_kind))
        if isinstance(self.encoding, dict):
            object.__setattr__(self, "encoding", EncodingConfig(**self.encoding))
        object.__setattr__(self, "feature_scale", tuple(float(v) for v in self.feature_scale))
        if self.hidden_layers < 1 or self.hidden_width < 1 or self.input_dim < 1:
            raise ValueError("hidden_layers, hidden_width and input_dim must be positive")
        if self.skip_at is not None and not 0 < self.skip_at < self.hidden_layers:
            raise ValueError(f"skip_at must be in (0, hidden_layers), got {self.skip_at}")

    @property
    def encoded_dim(self) -> int:
        return self.encoding.output_dim(self.input_dim)

    @property
    def n_layers(self) -> int:
        return self.hidden_layers + 1

    def layer_shapes(self) -> list:
        shapes, d = [], self.encoded_dim
        for i in range(self.hidden_layers):
            fan_in = d + (self.encoded_dim if i == self.skip_at else 0)
            shapes.append((fan_in, self.hidden_width))
            d = self.hidden_width
        shapes.append((d, 1))
        return shapes

    def to_dict(self):
        d = asdict(self)
        d["input_kind"] = self.input_kind.value
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["encoding"] = EncodingConfig(**d.get("encoding", {}))
        return cls(**d)


def default_config(input_kind=InputKind.ACOUSTIC_FEATURES, **overrides) -> NetworkConfig:
    """Feature networks default to 6 frequencies, coordinate networks to 10."""
    kind = InputKind(input_kind)
    L = 6 if kind is InputKind.ACOUSTIC_FEATURES else 10
    overrides.setdefault("encoding", EncodingConfig(L, True))
    return NetworkConfig(input_kind=kind, **overrides)


def sigmoid(z):
    z = _floating(z)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class OccupancyModel:
    """Weights ``W[i]`` of shape (fan_in, fan_out) and biases ``b[i]``.

    ``frozen`` counts trailing layers whose gradients are zeroed; it does not
    affect the forward pass.
    """

    def __init__(self, config: NetworkConfig, weights, biases, frozen: int = 0):
        self.config = config
        self.weights = [_floating(w) for w in weights]
        self.biases = [_floating(b) for b in biases]
        self.frozen = int(frozen)
        shapes = config.layer_shapes()
        if [w.shape for w in self.weights] != shapes or \
                [b.shape for b in self.biases] != [(s[1],) for s in shapes]:
            raise ValueError("parameter shapes do not match the network config")

    @classmethod
    def initialize(cls, config: NetworkConfig, seed: int = 0) -> "OccupancyModel":
        rng = np.random.default_rng(seed)
        ws, bs = [], []
        for fan_in, fan_out in config.layer_shapes():
            bound = np.sqrt(6.0 / fan_in)
            ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            bs.append(np.zeros(fan_out))
        return cls(config, ws, bs)

    @property
    def params(self) -> list:
        """Flat list ``[W0, b0, W1, b1, ...]`` of live arrays."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "OccupancyModel":
        return OccupancyModel(self.config, [w.copy() for w in self.weights],
                              [b.copy() for b in self.biases], self.frozen)

    def astype(self, dtype) -> "OccupancyModel":
        return OccupancyModel(self.config, [w.astype(dtype) for w in self.weights],
                              [b.astype(dtype) for b in self.biases], self.frozen)

    @property
    def dtype(self):
        return self.weights[0].dtype

    def trainable_mask(self) -> list:
        n = self.config.n_layers
        return [i < n - self.frozen for i in range(n)]

    # -- evaluation ------------------------------------------------------------

    def raw_inputs(self, points, theta=None):
        """Unencoded network input: scaled features, or the coordinates."""
        if self.config.input_kind is InputKind.COORDINATES:
            return np.asarray(points, dtype=self.dtype)
        if theta is None:
            raise ValueError("feature network needs acoustic features")
        return (np.asarray(theta, dtype=float) * np.asarray(self.config.feature_scale)).astype(self.dtype)

    def encode_inputs(self, raw):
        return encode(raw, self.config.encoding)

    def logits(self, enc, cache: list | None = None):
        cfg = self.config
        h = enc
        for i in range(cfg.hidden_layers):
            if i == cfg.skip_at:
                h = np.concatenate([h, enc], axis=-1)
            if cache is not None:
                cache.append(h)
            h = h @ self.weights[i] + self.biases[i]
            np.maximum(h, 0.0, out=h)
        if cache is not None:
            cache.append(h)
        return (h @ self.weights[-1] + self.biases[-1])[..., 0]

    def __call__(self, enc):
        return sigmoid(self.logits(enc))

    def predict(self, raw, batch_size: int = 32768):
        """Probabilities for raw (unencoded) inputs, evaluated in chunks."""
        raw = np.asarray(raw, dtype=self.dtype)
        flat = raw.reshape(-1, raw.shape[-1])
        out = np.empty(len(flat))
        for s in range(0, len(flat), batch_size):
            out[s:s + batch_size] = self(self.encode_inputs(flat[s:s + batch_size]))
        return out.reshape(raw.shape[:-1])

    def forward_cached(self, enc):
        cache = []
        p = sigmoid(self.logits(enc, cache))
        return p, cache

    def backward_cached(self, cache, p, upstream):
        """Parameter gradients of ``sum(upstream * p)`` over the batch."""
        cfg = self.config
        g = (np.asarray(upstream, dtype=p.dtype) * p * (1.0 - p))[:, None]
        gw = [None] * cfg.n_layers
        gb = [None] * cfg.n_layers
        mask = self.trainable_mask()
        # cache[i] is the input of affine layer i; cache[i + 1] starts with its ReLU output
        gw[-1] = cache[-1].T @ g
        gb[-1] = g.sum(axis=0)
        g = g @ self.weights[-1].T
        for i in range(cfg.hidden_layers - 1, -1, -1):
            g = g * (cache[i + 1][:, :cfg.hidden_width] > 0)
            gw[i] = cache[i].T @ g
            gb[i] = g.sum(axis=0)
            if i == 0:
                break
            g = g @ self.weights[i].T
            if i == cfg.skip_at:
                g = g[:, :-cfg.encoded_dim]
        for i, trainable in enumerate(mask):
            if not trainable:
                gw[i] = np.zeros_like(gw[i])
                gb[i] = np.zeros_like(gb[i])
        return gw, gb


def forward(model: OccupancyModel, x):
    """Occupancy probability for already-encoded input(s)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.config.encoded_dim:
        raise ValueError(f"input dim {x.shape[-1]} != encoded dim {model.config.encoded_dim}")
    return model(x)


def backward(model: OccupancyModel, x, upstream):
    """Gradients of ``sum(upstream * forward(model, x))``; returns ``(dW, db)`` lists."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[-1] != model.config.encoded_dim:
        raise ValueError(f"input dim {x.shape[-1]} != encoded dim {model.config.encoded_dim}")
    p, cache = model.forward_cached(x)
    return model.backward_cached(cache, p, np.broadcast_to(upstream, p.shape))


def freeze_suffix(model: OccupancyModel, n_layers: int) -> OccupancyModel:
    """Copy of ``model`` whose last ``n_layers`` affine layers take no updates."""
    if not 0 <= n_layers <= model.config.n_layers:
        raise ValueError(f"cannot freeze {n_layers} of {model.config.n_layers} layers")
    m = model.copy()
    m.frozen = n_layers
    return m


# -- checkpoints -----------------------------------------------------------------

def save_checkpoint(model: OccupancyModel, path, extra: dict | None = None):
    header = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
              "network": model.config.to_dict(), "frozen": model.frozen,
              "n_layers": model.config.n_layers, "extra": extra or {}}
    arrays = {"header": np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"W{i}"] = w
        arrays[f"b{i}"] = b
    save_npz(path, arrays)


def load_checkpoint(path) -> OccupancyModel:
    z = load_npz(path)
    header = json.loads(z["header"].tobytes().decode())
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a model checkpoint")
    if header["version"] > CHECKPOINT_VERSION:
        raise ValueError(f"checkpoint version {header['version']} is newer than supported")
    cfg = NetworkConfig.from_dict(header["network"])
    n = header["n_layers"]
    return OccupancyModel(cfg, [z[f"W{i}"] for i in range(n)],
                          [z[f"b{i}"] for i in range(n)], header["frozen"])


def clone_params(model: OccupancyModel) -> list:
    return copy.deepcopy(model.params)
