"""Synthetic surveillance-style clips with labelled anomalies.

A fixed camera watches a static background. Upright sprites ("walker",
"cart") cross it left to right at moderate speed. Training clips contain
only that. Each test clip contains anomaly intervals. During an interval one
extra sprite is visible. It is either rotated, moves backwards, moves too
fast, or has a shape never seen in training.

Labels are not copied from the interval table. A labeller inspects the
per-frame sprite states, so the same rule can be checked against the
training clips.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import ClipManifest, write_labels, write_pgm

ANOMALY_TYPES = ("rotated_sprite", "reversed_motion", "speed_anomaly", "unseen_shape")
NORMAL_SHAPES = ("walker", "cart")
UNSEEN_SHAPES = ("diamond", "ring")


@dataclass
class SyntheticSceneConfig:
    height: int = 112
    width: int = 168
    train_clips: int = 8
    test_clips: int = 4
    clip_length: int = 150
    sprite_count: int = 3
    sprite_scale: float = 1.0
    speed_range: tuple[float, float] = (1.0, 2.0)
    anomaly_types: tuple[str, ...] = ANOMALY_TYPES
    anomalies_per_clip: int = 2
    anomaly_length: tuple[int, int] = (20, 30)
    fast_speed: float = 4.0
    margin_frac: float = 0.125
    # explicit per-test-clip intervals [[start, end, type], ...]; overrides placement
    anomaly_intervals: list[list[list]] | None = None
    seed: int = 0

    def __post_init__(self):
        self.speed_range = tuple(float(v) for v in self.speed_range)
        self.anomaly_types = tuple(self.anomaly_types)
        self.anomaly_length = tuple(int(v) for v in self.anomaly_length)
        self.validate()

    def validate(self) -> None:
        def bad(name, why):
            raise ValueError(f"invalid synthetic config field {name!r}: {why}")

        for name in ("height", "width", "clip_length"):
            if getattr(self, name) < 8:
                bad(name, "must be at least 8")
        for name in ("train_clips", "test_clips", "sprite_count", "anomalies_per_clip"):
            if getattr(self, name) < 0:
                bad(name, "must be non-negative")
        if self.sprite_scale <= 0:
            bad("sprite_scale", "must be positive")
        lo, hi = self.speed_range
        if not 0 < lo <= hi:
            bad("speed_range", "need 0 < low <= high")
        if self.fast_speed <= hi:
            bad("fast_speed", "must exceed the normal speed range")
        unknown = [t for t in self.anomaly_types if t not in ANOMALY_TYPES]
        if unknown:
            bad("anomaly_types", f"unknown type(s) {unknown}")
        a, b = self.anomaly_length
        if not 1 <= a <= b:
            bad("anomaly_length", "need 1 <= min <= max")
        if not 0 <= self.margin_frac < 0.5:
            bad("margin_frac", "must be in [0, 0.5)")
        largest = max(_shape_mask(s, self.sprite_scale).shape[0] for s in NORMAL_SHAPES + UNSEEN_SHAPES)
        if largest + 2 * round(self.margin_frac * self.height) > self.height or largest > self.width:
            bad("sprite_scale", f"sprites of {largest}px do not fit a {self.height}x{self.width} frame")
        if self.anomaly_intervals is not None:
            if len(self.anomaly_intervals) != self.test_clips:
                bad("anomaly_intervals", f"need one list per test clip ({self.test_clips})")
            for clip in self.anomaly_intervals:
                for start, end, kind in clip:
                    if not 0 <= start < end <= self.clip_length:
                        bad("anomaly_intervals", f"[{start}, {end}) is outside the clip")
                    if kind not in ANOMALY_TYPES:
                        bad("anomaly_intervals", f"unknown type {kind!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSceneConfig":
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise ValueError(f"invalid synthetic config field {key!r}: unknown field")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ValueError(f"invalid synthetic config: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "SyntheticSceneConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


# ------------------------------------------------------------------ sprites
def _disk(r: int) -> np.ndarray:
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (xx**2 + yy**2) <= r * r + r


def _shape_mask(shape: str, scale: float = 1.0) -> np.ndarray:
    def s(v):
        return max(2, int(round(v * scale)))

    if shape == "walker":
        r = s(3)
        h, w = s(22), max(s(9), 2 * r + 1)
        m = np.zeros((h, w), bool)
        head = _disk(r)
        off = (w - head.shape[1]) // 2
        m[: head.shape[0], off : off + head.shape[1]] |= head
        body_top = head.shape[0]
        m[body_top : h - s(6), s(1) : w - s(1)] = True  # torso
        m[h - s(6) :, s(1) : s(1) + s(3)] = True  # left leg
        m[h - s(6) :, w - s(1) - s(3) : w - s(1)] = True  # right leg
        return m
    if shape == "cart":
        h, w = s(11), s(18)
        m = np.zeros((h, w), bool)
        m[: h - s(3), :] = True
        m[h - s(4) :, s(2) : s(5)] = True
        m[h - s(4) :, w - s(5) : w - s(2)] = True
        m[s(2) : s(4), s(3) : w - s(3)] = False  # window
        return m
    if shape == "diamond":
        r = s(8)
        yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
        return (np.abs(xx) + np.abs(yy)) <= r
    if shape == "ring":
        r = s(8)
        yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
        d2 = xx**2 + yy**2
        return (d2 <= r * r) & (d2 >= (r - s(3)) ** 2)
    raise ValueError(f"unknown sprite shape {shape!r}")


@dataclass
class Sprite:
    shape: str
    x: float
    y: int
    vx: float
    intensity: int
    rotation: int = 0  # degrees, counter-clockwise

    def mask(self, scale: float) -> np.ndarray:
        return np.rot90(_shape_mask(self.shape, scale), k=self.rotation // 90)

    def col(self) -> int:
        return int(np.floor(self.x + 0.5))


def is_anomalous(sprite: Sprite, config: SyntheticSceneConfig) -> bool:
    lo, hi = config.speed_range
    return (
        sprite.shape not in NORMAL_SHAPES
        or sprite.rotation % 360 != 0
        or not lo - 1e-9 <= sprite.vx <= hi + 1e-9
    )


def _visible(sprite: Sprite, config: SyntheticSceneConfig) -> bool:
    h, w = sprite.mask(config.sprite_scale).shape
    c = sprite.col()
    return c + w > 0 and c < config.width and sprite.y + h > 0 and sprite.y < config.height


def label_frames(track: list[list[Sprite]], config: SyntheticSceneConfig) -> np.ndarray:
    """1 (normal) unless an anomalous sprite is visible in that frame."""
    return np.array(
        [0 if any(is_anomalous(s, config) and _visible(s, config) for s in frame) else 1 for frame in track],
        dtype=np.int64,
    )


# ---------------------------------------------------------------- rendering
def make_background(config: SyntheticSceneConfig) -> np.ndarray:
    rng = np.random.default_rng([config.seed, 7919])
    H, W = config.height, config.width
    m = int(round(config.margin_frac * H))
    yy, xx = np.mgrid[0:H, 0:W]
    bg = 55.0 + 45.0 * yy / H + 6.0 * np.sin(xx / 9.0) * np.cos(yy / 13.0)
    # static structures in the top and bottom bands
    for _ in range(4):
        bw, bh = int(rng.integers(W // 10, W // 4)), int(rng.integers(m // 2, m + 1))
        x0 = int(rng.integers(0, W - bw))
        top = bool(rng.integers(2))
        y0 = 0 if top else H - bh
        bg[y0 : y0 + bh, x0 : x0 + bw] = rng.uniform(25, 45)
    # a bright fixed lamp keeps every frame's maximum well above mid-grey
    lx = int(rng.integers(2, W - 8))
    bg[1:5, lx : lx + 6] = 235.0
    bg += rng.normal(0.0, 2.0, size=bg.shape)
    return np.clip(np.round(bg), 0, 255).astype(np.uint8)


def render(background: np.ndarray, sprites: list[Sprite], scale: float) -> np.ndarray:
    frame = background.copy()
    H, W = frame.shape
    for s in sprites:
        m = s.mask(scale)
        h, w = m.shape
        c, r = s.col(), s.y
        r0, r1, c0, c1 = max(r, 0), min(r + h, H), max(c, 0), min(c + w, W)
        if r0 >= r1 or c0 >= c1:
            continue
        sub = m[r0 - r : r1 - r, c0 - c : c1 - c]
        frame[r0:r1, c0:c1][sub] = s.intensity
    return frame


# --------------------------------------------------------------- simulation
def _lane(rng: np.random.Generator, config: SyntheticSceneConfig, h: int) -> int:
    m = int(round(config.margin_frac * config.height))
    return int(rng.integers(m, config.height - m - h + 1))


def _new_normal(rng: np.random.Generator, config: SyntheticSceneConfig, x: float | None = None) -> Sprite:
    shape = NORMAL_SHAPES[int(rng.integers(len(NORMAL_SHAPES)))]
    h, w = _shape_mask(shape, config.sprite_scale).shape
    speed = float(rng.uniform(*config.speed_range))
    if x is None:
        x = -w - float(rng.integers(0, 24))
    return Sprite(shape, x, _lane(rng, config, h), speed, int(rng.integers(170, 241)))


def _anomaly_sprite(rng: np.random.Generator, config: SyntheticSceneConfig, kind: str, duration: int) -> Sprite:
    lo, hi = config.speed_range
    shape, rotation, speed = "walker", 0, float(rng.uniform(lo, hi))
    if kind == "rotated_sprite":
        rotation = int(rng.choice([90, 180, 270]))
    elif kind == "reversed_motion":
        speed = -speed
        shape = NORMAL_SHAPES[int(rng.integers(len(NORMAL_SHAPES)))]
    elif kind == "speed_anomaly":
        speed = config.fast_speed
        shape = NORMAL_SHAPES[int(rng.integers(len(NORMAL_SHAPES)))]
    elif kind == "unseen_shape":
        shape = UNSEEN_SHAPES[int(rng.integers(len(UNSEEN_SHAPES)))]
    s = Sprite(shape, 0.0, 0, speed, int(rng.integers(170, 241)), rotation)
    h, w = s.mask(config.sprite_scale).shape
    s.y = _lane(rng, config, h)
    # keep the sprite fully inside the frame for the whole interval
    travel = speed * (duration - 1)
    lo_x, hi_x = max(0.0, -travel), min(config.width - w, config.width - w - travel)
    if hi_x < lo_x:
        raise ValueError(
            f"{kind} sprite cannot stay visible for {duration} frames in a {config.width}px wide frame"
        )
    s.x = float(rng.uniform(lo_x, hi_x))
    return s


def place_intervals(rng: np.random.Generator, config: SyntheticSceneConfig, clip_index: int) -> list[tuple[int, int, str]]:
    if config.anomaly_intervals is not None:
        return [(int(a), int(b), str(t)) for a, b, t in config.anomaly_intervals[clip_index]]
    k = config.anomalies_per_clip
    if not config.anomaly_types or k == 0:
        return []
    lead = 10
    seg = (config.clip_length - lead) // k
    lo_len, hi_len = config.anomaly_length
    out = []
    for j in range(k):
        length = int(rng.integers(lo_len, hi_len + 1))
        s0, s1 = lead + j * seg, lead + (j + 1) * seg
        if s1 - s0 < length + 2:
            raise ValueError("clip_length too short for the requested anomalies")
        start = int(rng.integers(s0 + 1, s1 - length))
        kind = config.anomaly_types[(clip_index * k + j) % len(config.anomaly_types)]
        out.append((start, start + length, kind))
    return out


def simulate(
    rng: np.random.Generator,
    config: SyntheticSceneConfig,
    intervals: list[tuple[int, int, str]] = (),
) -> list[list[Sprite]]:
    """Per-frame sprite states for one clip."""
    W = config.width
    sprites = [_new_normal(rng, config, x=float(rng.uniform(-10, W - 10))) for _ in range(config.sprite_count)]
    extras: dict[int, Sprite] = {}
    track = []
    for t in range(config.clip_length):
        for j, (a, b, kind) in enumerate(intervals):
            if t == a:
                extras[j] = _anomaly_sprite(rng, config, kind, b - a)
            if t == b:
                extras.pop(j, None)
        track.append([Sprite(**asdict(s)) for s in sprites + list(extras.values())])
        for s in sprites + list(extras.values()):
            s.x += s.vx
        for i, s in enumerate(sprites):
            if s.col() >= W:
                sprites[i] = _new_normal(rng, config)
    return track


@dataclass
class SynthClip:
    clip_id: str
    frames: np.ndarray  # [L, H, W] uint8
    labels: np.ndarray | None
    intervals: list[tuple[int, int, str]] = field(default_factory=list)


@dataclass
class SynthDataset:
    config: SyntheticSceneConfig
    train: list[SynthClip]
    test: list[SynthClip]
    train_labels: list[np.ndarray]  # labeller output on the training clips (all ones)


def synth_generate(config: SyntheticSceneConfig) -> SynthDataset:
    """Deterministic in ``config.seed``; each clip draws from its own seed split."""
    bg = make_background(config)
    train, train_labels = [], []
    for i in range(config.train_clips):
        rng = np.random.default_rng([config.seed, 1, i])
        track = simulate(rng, config)
        frames = np.stack([render(bg, f, config.sprite_scale) for f in track])
        train.append(SynthClip(f"{i:02d}", frames, None))
        train_labels.append(label_frames(track, config))
    test = []
    for i in range(config.test_clips):
        rng = np.random.default_rng([config.seed, 2, i])
        intervals = place_intervals(rng, config, i)
        track = simulate(rng, config, intervals)
        frames = np.stack([render(bg, f, config.sprite_scale) for f in track])
        test.append(SynthClip(f"{i:02d}", frames, label_frames(track, config), intervals))
    return SynthDataset(config, train, test, train_labels)


def write_dataset(dataset: SynthDataset, root: str | Path) -> tuple[list[ClipManifest], list[ClipManifest]]:
    root = Path(root)
    manifests: dict[str, list[ClipManifest]] = {"train": [], "test": []}
    for split, clips in (("train", dataset.train), ("test", dataset.test)):
        for clip in clips:
            d = root / split / clip.clip_id
            d.mkdir(parents=True, exist_ok=True)
            paths = []
            for t, frame in enumerate(clip.frames):
                p = d / f"{t:05d}.pgm"
                write_pgm(p, frame)
                paths.append(p)
            if clip.labels is not None:
                write_labels(d / "labels.txt", clip.labels)
            manifests[split].append(ClipManifest(clip.clip_id, paths, clip.labels, clip.frames.shape[1:]))
    (root / "synth_config.json").write_text(dataset.config.to_json() + "\n")
    return manifests["train"], manifests["test"]
