"""Training loop and run configuration."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import discover_clips, load_clip, preprocess_clip, window_indices
from .losses import LossWeights, prediction_loss
from .model import Autoencoder, ModelConfig, build_autoencoder, save_model
from .optim import LrSchedule, adam_step, lr_at
from .patches import TransformPolicy, add_gaussian_noise, apply_patch_anomaly
from .tensor import backward

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    data_root: str
    model: ModelConfig = field(default_factory=ModelConfig)
    policy: str = TransformPolicy.TMT_OR_SRT.value
    epochs: int = 10
    batch_size: int = 4
    seed: int = 0
    patch_size: int | None = None  # None: 60 px at 240 rows, scaled with frame height
    margin_frac: float = 0.125
    noise_sigma_max: float = 0.03
    loss_weights: LossWeights = field(default_factory=LossWeights)
    lr_max: float = 2e-4
    lr_min: float = 1e-4

    def __post_init__(self):
        self.policy = TransformPolicy(self.policy).value
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")

    @property
    def effective_patch_size(self) -> int:
        if self.patch_size is not None:
            return int(self.patch_size)
        return int(round(60 * self.model.frame_height / 240))

    def to_json(self) -> str:
        d = asdict(self)
        d["data_root"] = str(Path(self.data_root).name)  # digest must not depend on where data lives
        return json.dumps(d, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


@dataclass
class TrainResult:
    model: Autoencoder
    epoch_losses: list[float]
    transform_log: list[str]


def load_split(root: str | Path, split: str, height: int, width: int):
    """Preprocessed clips [(manifest, frames [L,H,W] float32), ...]."""
    return [(m, preprocess_clip(load_clip(m), height, width)) for m in discover_clips(root, split)]


def item_rng(seed: int, epoch: int, position: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, position])


def assemble_batch(
    clips: list[np.ndarray],
    items: list[tuple[int, int]],
    cfg: RunConfig,
    epoch: int,
    first_position: int,
    transform_log: list[str] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Cuboids [B,1,n,H,W] with patch anomalies and noise, and targets [B,1,1,H,W]."""
    n = cfg.model.window
    H, W = clips[0].shape[1:]
    x = np.empty((len(items), 1, n, H, W), dtype=np.float32)
    y = np.empty((len(items), 1, 1, H, W), dtype=np.float32)
    for b, (ci, start) in enumerate(items):
        x[b, 0] = clips[ci][start : start + n]
        y[b, 0, 0] = clips[ci][start + n]
        rng = item_rng(cfg.seed, epoch, first_position + b)
        _, spec = apply_patch_anomaly(
            x[b], rng, cfg.policy, cfg.effective_patch_size, cfg.margin_frac, inplace=True
        )
        add_gaussian_noise(x[b], rng, cfg.noise_sigma_max, inplace=True)
        if transform_log is not None:
            transform_log.append(f"{epoch} {first_position + b} {spec.to_record()}")
    return x, y


def train(cfg: RunConfig, clips: list[np.ndarray] | None = None, progress: bool = False) -> TrainResult:
    mcfg = cfg.model
    if clips is None:
        clips = [frames for _, frames in load_split(cfg.data_root, "train", mcfg.frame_height, mcfg.frame_width)]
    index = [(ci, k) for ci, frames in enumerate(clips) for k, _ in window_indices(len(frames), mcfg.window)]
    if len(index) < cfg.batch_size:
        raise ValueError(f"only {len(index)} training windows, fewer than one batch of {cfg.batch_size}")

    model = build_autoencoder(mcfg, np.random.default_rng([cfg.seed, 0xA11]))
    model.train()
    schedule = LrSchedule(cfg.lr_max, cfg.lr_min, max(cfg.epochs - 1, 1))
    epoch_losses: list[float] = []
    transform_log: list[str] = []
    for epoch in range(cfg.epochs):
        lr = lr_at(schedule, epoch)
        order = np.random.default_rng([cfg.seed, epoch, 0x5EED]).permutation(len(index))
        total, batches, t0 = 0.0, 0, time.perf_counter()
        for pos in range(0, len(order), cfg.batch_size):
            items = [index[i] for i in order[pos : pos + cfg.batch_size]]
            x, y = assemble_batch(clips, items, cfg, epoch, pos, transform_log)
            loss = prediction_loss(model(x), y, cfg.loss_weights)
            model.params.zero_grad()
            backward(loss)
            adam_step(model.params, lr)
            total += loss.item()
            batches += 1
        epoch_losses.append(total / batches)
        msg = f"epoch {epoch + 1}/{cfg.epochs} loss {epoch_losses[-1]:.5f} lr {lr:.6f} ({time.perf_counter() - t0:.0f}s)"
        log.info(msg)
        if progress:
            print(msg, flush=True)
    return TrainResult(model, epoch_losses, transform_log)


def write_run(result: TrainResult, cfg: RunConfig, ckpt: str | Path) -> None:
    """Checkpoint plus ``<ckpt>.log`` (per-epoch loss) and ``<ckpt>.transforms``."""
    ckpt = Path(ckpt)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "seed": cfg.seed,
        "epoch": cfg.epochs,
        "policy": cfg.policy,
        "run_config": cfg.to_json(),
        "run_digest": cfg.digest(),
    }
    save_model(ckpt, result.model, meta)
    header = f"# seed={cfg.seed} config_digest={cfg.model.digest()} run_digest={cfg.digest()}\n"
    lines = [f"{i + 1}\t{loss!r}\n" for i, loss in enumerate(result.epoch_losses)]
    Path(f"{ckpt}.log").write_text(header + "epoch\tmean_loss\n" + "".join(lines))
    Path(f"{ckpt}.transforms").write_text(header + "".join(f"{line}\n" for line in result.transform_log))
