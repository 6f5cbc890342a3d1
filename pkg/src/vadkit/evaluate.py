"""Frame-level scoring of test clips with a trained predictor."""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from .data import ClipManifest, discover_clips, load_clip, preprocess_clip
from .losses import DegeneratePeak, PerfectPrediction, psnr
from .metrics import ClipScores, EvalSummary, score_clip, summarize, write_metrics, write_scores_csv
from .model import Autoencoder
from .tensor import no_grad

log = logging.getLogger(__name__)


def frame_psnr(pred: np.ndarray, target: np.ndarray) -> float:
    """PSNR with the two undefined cases mapped to +inf (perfect) and -inf (no peak)."""
    try:
        return psnr(pred, target)
    except PerfectPrediction:
        return math.inf
    except DegeneratePeak:
        return -math.inf


def predict_clip(model: Autoencoder, frames: np.ndarray, batch_size: int = 8) -> np.ndarray:
    """Predicted frames for targets ``n .. L-1`` of one preprocessed clip, shape [L-n, H, W]."""
    n = model.config.window
    L = len(frames)
    if L < n + 1:
        raise ValueError(f"clip of {L} frames is too short for a {n}-frame window plus target")
    out = np.empty((L - n,) + frames.shape[1:], dtype=np.float32)
    with no_grad():
        for lo in range(0, L - n, batch_size):
            hi = min(lo + batch_size, L - n)
            x = np.stack([frames[k : k + n] for k in range(lo, hi)])[:, None]
            out[lo:hi] = model(x).data[:, 0, 0]
    return out


def score_frames(model: Autoencoder, frames: np.ndarray, batch_size: int = 8) -> np.ndarray:
    n = model.config.window
    preds = predict_clip(model, frames, batch_size)
    return np.array([frame_psnr(p, frames[n + i]) for i, p in enumerate(preds)])


def evaluate_clips(
    model: Autoencoder, clips: list[tuple[ClipManifest, np.ndarray]], batch_size: int = 8
) -> list[ClipScores]:
    model.eval()
    skip = model.config.window
    return [score_clip(m.clip_id, score_frames(model, frames, batch_size), m.labels, skip) for m, frames in clips]


def load_test_clips(root: str | Path, height: int, width: int) -> list[tuple[ClipManifest, np.ndarray]]:
    return [(m, preprocess_clip(load_clip(m), height, width)) for m in discover_clips(root, "test")]


def metrics_record(summary: EvalSummary, seed, digest: str) -> dict:
    rec: dict = {
        "auc": summary.auc,
        "score_gap": summary.score_gap,
        "frames_scored": summary.frames_scored,
        "clips": summary.clips,
        "seed": seed,
        "config_digest": digest,
    }
    for clip_id, stats in summary.per_clip.items():
        for key, value in stats.items():
            rec[f"clip.{clip_id}.{key}"] = value
    return rec


def run_evaluation(model: Autoencoder, meta: dict, data_root: str | Path, out_dir: str | Path) -> dict:
    """Score the test split and write ``metrics.json`` and ``scores.csv`` into ``out_dir``."""
    cfg = model.config
    clips = load_test_clips(data_root, cfg.frame_height, cfg.frame_width)
    if not clips:
        raise ValueError(f"no test clips under {data_root}")
    scored = evaluate_clips(model, clips)
    summary = summarize(scored)
    if summary.auc is None:
        log.warning("test clips lack labels of both classes; AUC and score gap are not reported")
    seed = meta.get("seed")
    digest = meta.get("config_digest", cfg.digest())
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    record = metrics_record(summary, seed, digest)
    write_metrics(out / "metrics.json", record)
    write_scores_csv(out / "scores.csv", scored, {"seed": seed, "config_digest": digest})
    return record
