"""Per-frame inference throughput.

Frames are preloaded as decoded 8-bit arrays, so disk I/O is excluded while
preprocessing is included. Each timed step converts one incoming frame,
pushes it into the rolling window, predicts the next frame and computes its
PSNR against the frame that actually arrives. Score normalization needs the
whole clip and is computed afterwards, outside the timed region.
"""

from __future__ import annotations

import os
import platform
import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from .data import preprocess
from .evaluate import frame_psnr
from .metrics import normality_scores
from .model import Autoencoder
from .patches import COUNTERS
from .tensor import no_grad


@dataclass
class BenchReport:
    fps: float
    mean_latency_ms: float
    p50_latency_ms: float
    p95_latency_ms: float
    frames_timed: int
    warmup: int
    transform_calls: int
    noise_calls: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def machine_metadata() -> dict:
    import numpy

    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "processor": platform.processor() or "unknown",
        "cpu_count": os.cpu_count() or 0,
        "python": platform.python_version(),
        "numpy": numpy.__version__,
    }


def _stream(frames: list[np.ndarray], total: int):
    """Cycle through the preloaded frames until ``total`` frames have been yielded."""
    i = 0
    while i < total:
        for f in frames:
            if i >= total:
                return
            yield f
            i += 1


def run_bench(model: Autoencoder, frames: list[np.ndarray], warmup: int = 5, iters: int = 50) -> BenchReport:
    """Time ``iters`` predicted frames after ``warmup`` untimed ones."""
    if iters < 1 or warmup < 0:
        raise ValueError("iters must be positive and warmup non-negative")
    n = model.config.window
    H, W = model.config.frame_height, model.config.frame_width
    if len(frames) < n + 1:
        raise ValueError(f"need at least {n + 1} frames to benchmark, got {len(frames)}")
    model.eval()
    before = (COUNTERS.transform_calls, COUNTERS.noise_calls)
    window: deque[np.ndarray] = deque(maxlen=n)
    latencies: list[float] = []
    psnrs: list[float] = []
    with no_grad():
        for f in _stream(frames, n + warmup + iters):
            t0 = time.perf_counter()
            current = preprocess(f, H, W)
            if len(window) == n:
                x = np.stack(window)[None, None]
                pred = model(x).data[0, 0, 0]
                psnrs.append(frame_psnr(pred, current))
            window.append(current)
            dt = time.perf_counter() - t0
            if len(psnrs) > warmup:
                latencies.append(dt)
    normality_scores(psnrs)  # offline per-clip step, kept out of the timing
    lat = np.array(latencies)
    report = BenchReport(
        fps=float(len(lat) / lat.sum()),
        mean_latency_ms=float(lat.mean() * 1e3),
        p50_latency_ms=float(np.percentile(lat, 50) * 1e3),
        p95_latency_ms=float(np.percentile(lat, 95) * 1e3),
        frames_timed=len(lat),
        warmup=warmup,
        transform_calls=COUNTERS.transform_calls - before[0],
        noise_calls=COUNTERS.noise_calls - before[1],
    )
    if report.transform_calls or report.noise_calls:
        raise AssertionError(f"inference path invoked train-time transforms: {report}")
    return report
