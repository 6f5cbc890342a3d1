"""Train-time patch anomalies: spatial rotation and temporal mixing.

A frame cuboid is a float array shaped [C, n, H, W]. Both transforms act on
one square region that is shared by all n frames. They only rewrite the
patch pixels, never the rest of the frame. With ``inplace=True`` no
full-cuboid copy is made, and that is how the training loop calls them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

DIRECTIONS = (0, 90, 180, 270)


@dataclass
class TransformCounters:
    """Call and pixel counters, used to prove the eval path never transforms."""

    srt_calls: int = 0
    tmt_calls: int = 0
    apply_calls: int = 0
    noise_calls: int = 0
    pixels_written: int = 0
    full_copies: int = 0

    def reset(self) -> None:
        for f in self.__dataclass_fields__:
            setattr(self, f, 0)

    @property
    def transform_calls(self) -> int:
        return self.srt_calls + self.tmt_calls + self.apply_calls


COUNTERS = TransformCounters()


class TransformPolicy(str, enum.Enum):
    BASELINE = "baseline"
    TMT_ONLY = "tmt"
    SRT_ONLY = "srt"
    TMT_OR_SRT_CHUNK = "tmt-or-srt-chunk"
    TMT_OR_SRT = "tmt-or-srt"
    TMT_AND_SRT = "tmt-and-srt"


@dataclass(frozen=True)
class PatchRegion:
    x: int
    y: int
    width: int = 60
    height: int = 60

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.height), slice(self.x, self.x + self.width)


@dataclass(frozen=True)
class TransformSpec:
    mode: str  # none | srt | tmt | both
    region: PatchRegion | None
    directions: tuple[int, ...]
    permutation: tuple[int, ...]

    @classmethod
    def identity(cls, n: int) -> "TransformSpec":
        return cls("none", None, (0,) * n, tuple(range(n)))

    def to_record(self) -> str:
        r = self.region
        where = "-" if r is None else f"{r.x},{r.y},{r.width},{r.height}"
        return (
            f"{self.mode} region={where} "
            f"delta={','.join(map(str, self.directions))} "
            f"xi={','.join(map(str, self.permutation))}"
        )

    @classmethod
    def from_record(cls, line: str) -> "TransformSpec":
        mode, *fields_ = line.split()
        kv = dict(f.split("=", 1) for f in fields_)
        region = None
        if kv["region"] != "-":
            x, y, w, h = (int(v) for v in kv["region"].split(","))
            region = PatchRegion(x, y, w, h)
        return cls(
            mode,
            region,
            tuple(int(v) for v in kv["delta"].split(",")),
            tuple(int(v) for v in kv["xi"].split(",")),
        )


def _round_half_up(v: float) -> int:
    return int(np.floor(v + 0.5))


def margin_rows(height: int, margin_frac: float) -> int:
    return _round_half_up(margin_frac * height)


def build_cuboid(frames, n: int = 5, frame_shape: tuple[int, int] | None = None) -> np.ndarray:
    """Stack ``n`` preprocessed [1,H,W] (or [H,W]) frames along time -> [1,n,H,W]."""
    frames = [np.asarray(f) for f in frames]
    if len(frames) != n:
        raise ValueError(f"expected {n} frames, got {len(frames)}")
    frames = [f[None] if f.ndim == 2 else f for f in frames]
    shape = frames[0].shape
    if frame_shape is not None and shape != (1, *frame_shape):
        raise ValueError(f"frame shape {shape} != expected {(1, *frame_shape)}")
    for i, f in enumerate(frames):
        if f.shape != shape or f.shape[0] != 1:
            raise ValueError(f"frame {i} has shape {f.shape}, expected {shape} with one channel")
        if f.size and (f.min() < -1.0 or f.max() > 1.0):
            raise ValueError(f"frame {i} has values outside [-1, 1]")
    return np.stack(frames, axis=1).astype(np.float32, copy=False)


def sample_patch_region(
    rng: np.random.Generator,
    height: int = 240,
    width: int = 360,
    patch_w: int = 60,
    patch_h: int = 60,
    margin_frac: float = 0.125,
) -> PatchRegion:
    """Uniform patch location, excluding top and bottom bands of the frame."""
    m = margin_rows(height, margin_frac)
    if patch_w > width or patch_h + 2 * m > height:
        raise ValueError(
            f"patch {patch_h}x{patch_w} does not fit a {height}x{width} frame with a {m}-row margin"
        )
    x = int(rng.integers(0, width - patch_w + 1))
    y = int(rng.integers(m, height - patch_h - m + 1))
    return PatchRegion(x, y, patch_w, patch_h)


def _check_region(cuboid: np.ndarray, region: PatchRegion) -> None:
    H, W = cuboid.shape[-2:]
    if region.x < 0 or region.y < 0 or region.x + region.width > W or region.y + region.height > H:
        raise ValueError(f"{region} lies outside a {H}x{W} frame")


def _target(cuboid: np.ndarray, inplace: bool) -> np.ndarray:
    if inplace:
        return cuboid
    COUNTERS.full_copies += 1
    return cuboid.copy()


def srt(cuboid: np.ndarray, region: PatchRegion, directions, inplace: bool = False) -> np.ndarray:
    """Rotate frame i's patch counter-clockwise by ``directions[i]`` degrees."""
    C, n, H, W = cuboid.shape
    directions = tuple(int(d) for d in directions)
    if len(directions) != n:
        raise ValueError(f"need {n} directions, got {len(directions)}")
    if any(d not in DIRECTIONS for d in directions):
        raise ValueError(f"directions must be in {DIRECTIONS}, got {directions}")
    if region.width != region.height and any(d in (90, 270) for d in directions):
        raise ValueError(f"cannot rotate a non-square {region.height}x{region.width} patch by 90/270 degrees")
    _check_region(cuboid, region)
    out = _target(cuboid, inplace)
    rows, cols = region.slices()
    COUNTERS.srt_calls += 1
    for i, d in enumerate(directions):
        patch = out[:, i, rows, cols]
        out[:, i, rows, cols] = np.rot90(patch, k=d // 90, axes=(1, 2)).copy()
    COUNTERS.pixels_written += C * n * region.width * region.height
    return out


def _check_permutation(perm, n: int) -> tuple[int, ...]:
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(n)):
        raise ValueError(f"{perm} is not a permutation of 0..{n - 1}")
    return perm


def tmt(cuboid: np.ndarray, region: PatchRegion, permutation, inplace: bool = False) -> np.ndarray:
    """Output frame i's patch is input frame ``permutation[i]``'s patch."""
    C, n, H, W = cuboid.shape
    perm = _check_permutation(permutation, n)
    _check_region(cuboid, region)
    out = _target(cuboid, inplace)
    rows, cols = region.slices()
    COUNTERS.tmt_calls += 1
    stack = out[:, :, rows, cols].copy()
    out[:, :, rows, cols] = stack[:, list(perm)]
    COUNTERS.pixels_written += C * n * region.width * region.height
    return out


def inverse_permutation(perm) -> tuple[int, ...]:
    inv = [0] * len(perm)
    for i, p in enumerate(perm):
        inv[p] = i
    return tuple(inv)


def random_nonidentity_permutation(rng: np.random.Generator, n: int) -> tuple[int, ...]:
    """Uniform over the n! - 1 non-identity permutations (rejection sampling)."""
    if n < 2:
        raise ValueError("need at least two frames to mix")
    ident = tuple(range(n))
    while True:
        perm = tuple(int(p) for p in rng.permutation(n))
        if perm != ident:
            return perm


def draw_spec(
    rng: np.random.Generator,
    policy: TransformPolicy,
    n: int,
    height: int,
    width: int,
    patch_size: int = 60,
    margin_frac: float = 0.125,
) -> TransformSpec:
    """Draw one transform event. Draw order: region, mode coin, then parameters."""
    policy = TransformPolicy(policy)
    if policy is TransformPolicy.BASELINE:
        return TransformSpec.identity(n)
    region = sample_patch_region(rng, height, width, patch_size, patch_size, margin_frac)
    ident_dirs, ident_perm = (0,) * n, tuple(range(n))

    if policy is TransformPolicy.TMT_ONLY:
        mode = "tmt"
    elif policy is TransformPolicy.SRT_ONLY:
        mode = "srt"
    elif policy is TransformPolicy.TMT_AND_SRT:
        mode = "both"
    else:
        mode = "tmt" if rng.random() < 0.5 else "srt"

    dirs, perm = ident_dirs, ident_perm
    if mode in ("tmt", "both"):
        perm = random_nonidentity_permutation(rng, n)
    if mode in ("srt", "both"):
        if policy is TransformPolicy.TMT_OR_SRT_CHUNK:
            dirs = (DIRECTIONS[int(rng.integers(4))],) * n
        else:
            dirs = tuple(DIRECTIONS[int(k)] for k in rng.integers(0, 4, size=n))
    return TransformSpec(mode, region, dirs, perm)


def replay_spec(cuboid: np.ndarray, spec: TransformSpec, inplace: bool = False) -> np.ndarray:
    """Apply a recorded event. For mode ``both`` the mixing runs before the rotation."""
    if spec.mode == "none":
        return cuboid if inplace else cuboid.copy()
    out = _target(cuboid, inplace)
    if spec.mode in ("tmt", "both"):
        tmt(out, spec.region, spec.permutation, inplace=True)
    if spec.mode in ("srt", "both"):
        srt(out, spec.region, spec.directions, inplace=True)
    return out


def apply_patch_anomaly(
    cuboid: np.ndarray,
    rng: np.random.Generator,
    policy: TransformPolicy | str = TransformPolicy.TMT_OR_SRT,
    patch_size: int = 60,
    margin_frac: float = 0.125,
    inplace: bool = False,
) -> tuple[np.ndarray, TransformSpec]:
    C, n, H, W = cuboid.shape
    COUNTERS.apply_calls += 1
    spec = draw_spec(rng, TransformPolicy(policy), n, H, W, patch_size, margin_frac)
    return replay_spec(cuboid, spec, inplace=inplace), spec


def add_gaussian_noise(
    cuboid: np.ndarray,
    rng: np.random.Generator,
    sigma_max: float = 0.03,
    sigma: float | None = None,
    inplace: bool = False,
) -> np.ndarray:
    """Zero-mean Gaussian noise; std drawn once per cuboid from U[0, sigma_max].

    The result is not clipped back to [-1, 1].
    """
    COUNTERS.noise_calls += 1
    if sigma is None:
        sigma = float(rng.uniform(0.0, sigma_max))
    out = cuboid if inplace else cuboid.copy()
    if sigma > 0:
        out += (rng.standard_normal(out.shape) * sigma).astype(out.dtype)
    return out

