"""Frame ingestion, preprocessing and sliding-window pairs.

On-disk layout::

    <root>/train/<clip>/<frame%05d>.pgm
    <root>/test/<clip>/<frame%05d>.pgm
    <root>/test/<clip>/labels.txt        one 0/1 per frame (0 = abnormal)

Frames inside a clip are ordered lexicographically by file name.

Resizing is bilinear with half-pixel centres: output pixel ``i`` samples the
source at ``(i + 0.5) * in/out - 0.5``, clamped to ``[0, in - 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

LUMA = (0.299, 0.587, 0.114)


class FrameError(ValueError):
    pass


# ------------------------------------------------------------------- PGM/PPM
def _header_tokens(blob: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(blob):
            raise FrameError("truncated header")
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        tokens.append(blob[start:pos])
    return tokens, pos + 1  # one whitespace byte separates header and raster


def read_pnm(path: str | Path) -> np.ndarray:
    """Read a binary 8-bit PGM (P5 -> [H,W]) or PPM (P6 -> [H,W,3]) as uint8."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise FrameError(f"{path}: cannot read frame ({exc.strerror})") from None
    try:
        (magic, w, h, maxval), offset = _header_tokens(blob, 4)
        width, height, maxval = int(w), int(h), int(maxval)
    except (FrameError, ValueError) as exc:
        raise FrameError(f"{path}: corrupt header ({exc})") from None
    channels = {b"P5": 1, b"P6": 3}.get(magic)
    if channels is None:
        raise FrameError(f"{path}: unsupported format {magic!r} (need P5 or P6)")
    if not 0 < maxval < 256:
        raise FrameError(f"{path}: only 8-bit images are supported (maxval {maxval})")
    n = width * height * channels
    raster = blob[offset : offset + n]
    if len(raster) != n or width < 1 or height < 1:
        raise FrameError(f"{path}: truncated raster ({len(raster)} of {n} bytes)")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels)
    return arr[:, :, 0].copy() if channels == 1 else arr.copy()


def write_pgm(path: str | Path, frame: np.ndarray) -> None:
    frame = np.asarray(frame)
    if frame.ndim != 2 or frame.dtype != np.uint8:
        raise FrameError(f"write_pgm needs a 2-D uint8 array, got {frame.dtype} {frame.shape}")
    h, w = frame.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + frame.tobytes())


# ---------------------------------------------------------------- manifests
@dataclass
class ClipManifest:
    clip_id: str
    frame_paths: list[Path]
    labels: np.ndarray | None = None
    source_dims: tuple[int, int] | None = None

    def __post_init__(self):
        if self.labels is not None and len(self.labels) != len(self.frame_paths):
            raise ValueError(
                f"clip {self.clip_id}: {len(self.labels)} labels for {len(self.frame_paths)} frames"
            )

    def __len__(self) -> int:
        return len(self.frame_paths)

    def to_text(self) -> str:
        return "".join(f"{p}\n" for p in self.frame_paths)

    @classmethod
    def from_text(cls, clip_id: str, text: str, base: Path | None = None, labels=None) -> "ClipManifest":
        paths = [Path(line.strip()) for line in text.splitlines() if line.strip()]
        if base is not None:
            paths = [p if p.is_absolute() else base / p for p in paths]
        return cls(clip_id, paths, None if labels is None else np.asarray(labels, dtype=np.int64))


def read_labels(path: str | Path) -> np.ndarray:
    values = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line not in ("0", "1"):
            raise ValueError(f"{path}:{lineno}: label must be 0 or 1, got {line!r}")
        values.append(int(line))
    return np.array(values, dtype=np.int64)


def write_labels(path: str | Path, labels: Sequence[int]) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels))


def discover_clips(root: str | Path, split: str) -> list[ClipManifest]:
    """Manifests for ``<root>/<split>/<clip>/``, clips and frames in lexicographic order."""
    base = Path(root) / split
    if not base.is_dir():
        raise FileNotFoundError(f"no {split!r} directory under {root}")
    clips = []
    for clip_dir in sorted(p for p in base.iterdir() if p.is_dir()):
        frames = sorted(clip_dir.glob("*.pgm")) + sorted(clip_dir.glob("*.ppm"))
        frames.sort(key=lambda p: p.name)
        labels_path = clip_dir / "labels.txt"
        labels = read_labels(labels_path) if labels_path.exists() else None
        clips.append(ClipManifest(clip_dir.name, frames, labels))
    return clips


def load_clip(manifest: ClipManifest) -> list[np.ndarray]:
    """Read every frame of a clip in manifest order."""
    frames = []
    for path in manifest.frame_paths:
        if not Path(path).exists():
            raise FrameError(f"clip {manifest.clip_id}: missing frame {path}")
        frame = read_pnm(path)
        if frames and frame.shape != frames[0].shape:
            raise FrameError(
                f"clip {manifest.clip_id}: {path} has shape {frame.shape}, expected {frames[0].shape}"
            )
        frames.append(frame)
    if frames:
        manifest.source_dims = frames[0].shape[:2]
    return frames


# ------------------------------------------------------------- preprocessing
def to_gray(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame)
    if frame.ndim == 2:
        return frame.astype(np.float64)
    if frame.ndim == 3 and frame.shape[2] == 3:
        return frame.astype(np.float64) @ np.array(LUMA)
    if frame.ndim == 3 and frame.shape[2] == 1:
        return frame[:, :, 0].astype(np.float64)
    raise FrameError(f"unsupported frame shape {frame.shape}")


def _axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.shape == (height, width):
        return img.copy()
    r0, r1, wr = _axis_weights(img.shape[0], height)
    c0, c1, wc = _axis_weights(img.shape[1], width)
    rows = img[r0] * (1 - wr)[:, None] + img[r1] * wr[:, None]
    return rows[:, c0] * (1 - wc) + rows[:, c1] * wc


def preprocess(frame: np.ndarray, height: int = 240, width: int = 360) -> np.ndarray:
    """8-bit frame -> float32 [H, W] in [-1, 1] at the model resolution."""
    frame = np.asarray(frame)
    if frame.size == 0 or min(frame.shape[:2]) == 0:
        raise FrameError("empty frame")
    gray = resize_bilinear(to_gray(frame), height, width)
    return (gray / 127.5 - 1.0).astype(np.float32)


def preprocess_clip(frames: Sequence[np.ndarray], height: int, width: int) -> np.ndarray:
    """Stack of preprocessed frames, shape [L, H, W]."""
    return np.stack([preprocess(f, height, width) for f in frames])


# ------------------------------------------------------------------ windows
def window_indices(length: int, n: int = 5) -> list[tuple[int, int]]:
    """(first input frame, target frame) for every window of a clip."""
    if length < n + 1:
        raise ValueError(f"clip of {length} frames is too short for a {n}-frame window plus target")
    return [(k, k + n) for k in range(length - n)]


def sliding_windows(frames: np.ndarray, n: int = 5) -> list[tuple[np.ndarray, np.ndarray]]:
    """(cuboid [1,n,H,W], target [1,H,W]) pairs of one clip; never crosses clips."""
    frames = np.asarray(frames)
    return [(frames[k:t][None].copy(), frames[t][None].copy()) for k, t in window_indices(len(frames), n)]
