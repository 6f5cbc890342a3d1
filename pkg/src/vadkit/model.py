"""U-Net style 3D-convolutional future-frame predictor.

Encoder: three blocks, each with spatial stride 2 and a 3x3x3 kernel. Block 1
is conv + leakyReLU. Blocks 2 and 3 are conv + batchnorm + leakyReLU. The
first two blocks use no temporal padding, so a 5-frame window shrinks to
5 -> 3 -> 1 frames.

Decoder: mirrors the encoder with transposed convolutions and ReLU. The
outputs of decoder blocks 3 and 2 are concatenated with the encoder features
at the same resolution. Where the temporal sizes differ, the encoder feature
contributes its centre frame. The last block has a linear output.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint
from .layers import (
    RunningStats,
    batchnorm3d,
    conv3d,
    conv_out_size,
    deconv3d,
    deconv_out_size,
    leaky_relu,
    relu,
)
from .optim import ParamStore
from .tensor import Tensor, concat

INIT_SCHEME = "kaiming-uniform(bound=sqrt(6/fan_in)), output layer zero, bias=0, gamma=1, beta=0"


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 1
    window: int = 5
    widths: tuple[int, int, int] = (32, 128, 256)
    spatial_strides: tuple[int, int, int] = (2, 2, 2)
    # 0 = no temporal padding (block shrinks time by kernel-1), 1 = "same" padding
    temporal_padding: tuple[int, int, int] = (0, 0, 1)
    kernel: int = 3
    leaky_slope: float = 0.2
    frame_height: int = 240
    frame_width: int = 360
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        for name in ("widths", "spatial_strides", "temporal_padding"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config field(s): {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    def scaled_to(self, height: int, width: int) -> "ModelConfig":
        d = asdict(self)
        d.update(frame_height=height, frame_width=width)
        return ModelConfig.from_dict(d)


@dataclass(frozen=True)
class _Geometry:
    temporal: tuple[int, ...]  # time length entering block i, plus the final length
    spatial: tuple[tuple[int, int], ...]  # (H, W) entering block i, plus the bottleneck
    output_padding: tuple[tuple[int, int, int], ...]  # per decoder block 3, 2, 1


def _geometry(cfg: ModelConfig) -> _Geometry:
    if len(cfg.widths) != 3 or len(cfg.spatial_strides) != 3 or len(cfg.temporal_padding) != 3:
        raise ValueError("model config needs exactly 3 encoder blocks")
    if cfg.kernel != 3:
        raise ValueError(f"kernel must be 3, got {cfg.kernel}")
    if min(cfg.widths) < 1 or cfg.in_channels < 1:
        raise ValueError("channel widths must be positive")
    k = cfg.kernel
    total = int(np.prod(cfg.spatial_strides))
    if cfg.frame_height % total or cfg.frame_width % total:
        raise ValueError(
            f"spatial strides {cfg.spatial_strides} (product {total}) do not divide "
            f"frame size {cfg.frame_height}x{cfg.frame_width}"
        )
    temporal = [cfg.window]
    spatial = [(cfg.frame_height, cfg.frame_width)]
    for s, tp in zip(cfg.spatial_strides, cfg.temporal_padding):
        t = conv_out_size(temporal[-1], k, 1, tp)
        if t < 1:
            raise ValueError(f"window {cfg.window} collapses below one frame with temporal padding {cfg.temporal_padding}")
        temporal.append(t)
        h, w = spatial[-1]
        spatial.append((conv_out_size(h, k, s, 1), conv_out_size(w, k, s, 1)))
    if temporal[-1] != 1:
        raise ValueError(f"encoder must reduce the window to one frame, got {temporal[-1]}")
    opads = []
    for i in (2, 1, 0):
        s = cfg.spatial_strides[i]
        (h_in, w_in), (h_out, w_out) = spatial[i + 1], spatial[i]
        oph = h_out - deconv_out_size(h_in, k, s, 1)
        opw = w_out - deconv_out_size(w_in, k, s, 1)
        if not (0 <= oph < max(s, 1) and 0 <= opw < max(s, 1)):
            raise ValueError(f"cannot invert stride {s} from {(h_in, w_in)} to {(h_out, w_out)}")
        opads.append((0, oph, opw))
    return _Geometry(tuple(temporal), tuple(spatial), tuple(opads))


def _centre_frame(x: Tensor, length: int) -> Tensor:
    if x.shape[2] == length:
        return x
    start = (x.shape[2] - length) // 2
    return x[:, :, start : start + length]


@dataclass
class Autoencoder:
    config: ModelConfig
    params: ParamStore
    running: dict[str, RunningStats] = field(default_factory=dict)
    training: bool = True

    def __post_init__(self):
        self.geometry = _geometry(self.config)

    def train(self) -> "Autoencoder":
        self.training = True
        return self

    def eval(self) -> "Autoencoder":
        self.training = False
        return self

    @property
    def dtype(self):
        return next(iter(self.params.params.values())).dtype

    def __call__(self, x) -> Tensor:
        return forward(self, x)

    # ---------------------------------------------------------- persistence
    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {path: p.data for path, p in self.params}
        for name, rs in self.running.items():
            arrays[f"{name}.running_mean"] = rs.mean
            arrays[f"{name}.running_var"] = rs.var
        return arrays

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        expected = set(self.state_arrays())
        if set(arrays) != expected:
            missing, extra = expected - set(arrays), set(arrays) - expected
            raise ValueError(f"checkpoint mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for path, p in self.params:
            if arrays[path].shape != p.shape:
                raise ValueError(f"{path}: checkpoint shape {arrays[path].shape} != model shape {p.shape}")
            p.data = arrays[path].astype(p.dtype)
        for name, rs in self.running.items():
            rs.mean = arrays[f"{name}.running_mean"].astype(rs.mean.dtype)
            rs.var = arrays[f"{name}.running_var"].astype(rs.var.dtype)


def _init_weight(rng: np.random.Generator, shape, fan_in: int, dtype) -> Tensor:
    bound = np.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype))


def build_autoencoder(config: ModelConfig, rng: np.random.Generator | int = 0, dtype=np.float32) -> Autoencoder:
    """Create parameters for ``config``. Values are drawn in float64 then cast."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    _geometry(config)  # validate before allocating
    c1, c2, c3 = config.widths
    k3 = config.kernel**3
    store = ParamStore()
    running: dict[str, RunningStats] = {}

    def conv(name, cin, cout, transposed=False, bn=False, zero=False):
        shape = (cin, cout, *(config.kernel,) * 3) if transposed else (cout, cin, *(config.kernel,) * 3)
        weight = Tensor(np.zeros(shape, dtype=dtype)) if zero else _init_weight(rng, shape, cin * k3, dtype)
        store.add(f"{name}.weight", weight)
        store.add(f"{name}.bias", Tensor(np.zeros(cout, dtype=dtype)))
        if bn:
            store.add(f"{name}.bn.gamma", Tensor(np.ones(cout, dtype=dtype)))
            store.add(f"{name}.bn.beta", Tensor(np.zeros(cout, dtype=dtype)))
            running[f"{name}.bn"] = RunningStats.fresh(cout, dtype)

    conv("enc1", config.in_channels, c1)
    conv("enc2", c1, c2, bn=True)
    conv("enc3", c2, c3, bn=True)
    conv("dec3", c3, c2, transposed=True, bn=True)
    conv("dec2", 2 * c2, c1, transposed=True, bn=True)
    # The output starts at exactly 0. Global SSIM on [-1, 1] frames is nearly
    # invariant to negating the prediction, so a random output layer whose mean
    # has the wrong sign relative to the scene can settle on the negated frame.
    conv("dec1", 2 * c1, config.in_channels, transposed=True, zero=True)
    return Autoencoder(config, store, running)


def _bn(model: Autoencoder, name: str, x: Tensor) -> Tensor:
    p, cfg = model.params, model.config
    return batchnorm3d(
        x,
        p[f"{name}.bn.gamma"],
        p[f"{name}.bn.beta"],
        model.running[f"{name}.bn"],
        training=model.training,
        momentum=cfg.bn_momentum,
        eps=cfg.bn_eps,
    )


def forward(model: Autoencoder, x) -> Tensor:
    """[B, C, n, H, W] frame cuboids -> [B, C, 1, H, W] predicted next frames."""
    cfg, geo, p = model.config, model.geometry, model.params
    if not isinstance(x, Tensor):
        x = Tensor(np.asarray(x, dtype=model.dtype))
    want = (cfg.in_channels, cfg.window, cfg.frame_height, cfg.frame_width)
    if x.ndim != 5 or tuple(x.shape[1:]) != want:
        raise ValueError(f"expected input [B, {', '.join(map(str, want))}], got {x.shape}")
    s = cfg.spatial_strides
    tp = cfg.temporal_padding
    slope = cfg.leaky_slope

    e1 = leaky_relu(conv3d(x, p["enc1.weight"], p["enc1.bias"], (1, s[0], s[0]), (tp[0], 1, 1)), slope)
    e2 = conv3d(e1, p["enc2.weight"], p["enc2.bias"], (1, s[1], s[1]), (tp[1], 1, 1))
    e2 = leaky_relu(_bn(model, "enc2", e2), slope)
    e3 = conv3d(e2, p["enc3.weight"], p["enc3.bias"], (1, s[2], s[2]), (tp[2], 1, 1))
    e3 = leaky_relu(_bn(model, "enc3", e3), slope)

    op3, op2, op1 = geo.output_padding
    d3 = deconv3d(e3, p["dec3.weight"], p["dec3.bias"], (1, s[2], s[2]), 1, op3)
    d3 = relu(_bn(model, "dec3", d3))
    d2 = deconv3d(concat([d3, _centre_frame(e2, 1)], axis=1), p["dec2.weight"], p["dec2.bias"], (1, s[1], s[1]), 1, op2)
    d2 = relu(_bn(model, "dec2", d2))
    return deconv3d(concat([d2, _centre_frame(e1, 1)], axis=1), p["dec1.weight"], p["dec1.bias"], (1, s[0], s[0]), 1, op1)


def param_count(model: Autoencoder | ParamStore) -> int:
    store = model.params if isinstance(model, Autoencoder) else model
    return store.count()


def save_model(path: str | Path, model: Autoencoder, metadata: dict[str, str] | None = None) -> None:
    meta = {
        "model_config": model.config.to_json(),
        "config_digest": model.config.digest(),
        "init": INIT_SCHEME,
    }
    meta.update({k: str(v) for k, v in (metadata or {}).items()})
    checkpoint.save(path, model.state_arrays(), meta)


def load_model(path: str | Path) -> tuple[Autoencoder, dict[str, str]]:
    arrays, meta = checkpoint.load(path)
    if "model_config" not in meta:
        raise checkpoint.CheckpointError(f"{path}: checkpoint has no model_config metadata")
    config = ModelConfig.from_json(meta["model_config"])
    if meta.get("config_digest") != config.digest():
        raise checkpoint.CheckpointError(
            f"{path}: config digest {meta.get('config_digest')} does not match stored config ({config.digest()})"
        )
    model = build_autoencoder(config, 0, dtype=next(iter(arrays.values())).dtype)
    model.load_state_arrays(arrays)
    model.eval()
    return model, meta
