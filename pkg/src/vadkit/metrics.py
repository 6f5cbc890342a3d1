"""Per-clip normality scores, frame-level ROC-AUC and the normal/abnormal score gap."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

NORMAL, ABNORMAL = 1, 0


def finite_psnrs(values: Sequence[float]) -> np.ndarray:
    """Replace non-finite PSNR markers by the clip's finite extremes.

    ``+inf`` marks a perfect prediction and becomes the largest finite value;
    ``-inf``/``nan`` mark a degenerate peak and become the smallest.
    """
    v = np.asarray(values, dtype=np.float64)
    ok = np.isfinite(v)
    if not ok.any():
        return np.zeros_like(v)
    lo, hi = v[ok].min(), v[ok].max()
    out = v.copy()
    out[np.isposinf(v)] = hi
    out[np.isneginf(v) | np.isnan(v)] = lo
    return out


def normality_scores(psnrs: Sequence[float]) -> np.ndarray:
    """Min-max normalize one clip's PSNRs to [0, 1]; a constant clip maps to 0.5."""
    v = finite_psnrs(psnrs)
    if v.size == 0:
        raise ValueError("cannot normalize an empty clip")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.full_like(v, 0.5)
    return (v - lo) / (hi - lo)


def _check_binary(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores {s.shape} and labels {y.shape} must be equal-length 1-D arrays")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 (abnormal) or 1 (normal)")
    if y.min() == y.max():
        raise ValueError("both classes (normal and abnormal) must be present")
    return s, y.astype(np.int64)


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve, with label 1 (normal) as the positive class.

    The curve is traced by sweeping a threshold down through the distinct
    scores; tied scores move along a diagonal segment, and the trapezoidal area
    therefore counts a tie as half a correct ordering.
    """
    s, y = _check_binary(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # last index of each run of equal scores
    ends = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tp = np.cumsum(y)[ends]
    fp = (ends + 1) - tp
    tpr = np.r_[0.0, tp / tp[-1]]
    fpr = np.r_[0.0, fp / fp[-1]]
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))


def score_gap(scores, labels) -> float:
    """Mean normal-frame score minus mean abnormal-frame score."""
    s, y = _check_binary(scores, labels)
    return float(s[y == NORMAL].mean() - s[y == ABNORMAL].mean())


@dataclass
class ClipScores:
    clip_id: str
    psnr: np.ndarray
    scores: np.ndarray
    labels: np.ndarray | None
    frame_index: np.ndarray
    skip: int = 5

    def __post_init__(self):
        if len(self.psnr) != len(self.scores) or len(self.scores) != len(self.frame_index):
            raise ValueError("psnr, scores and frame_index must have equal length")
        if self.labels is not None and len(self.labels) != len(self.scores):
            raise ValueError("labels and scores must have equal length")


def score_clip(clip_id: str, psnrs: Sequence[float], labels=None, skip: int = 5) -> ClipScores:
    """Scores for the frames ``skip .. skip+len(psnrs)-1`` of a clip.

    ``labels`` covers the full clip (every frame); only the scored frames are kept.
    """
    psnrs = np.asarray(psnrs, dtype=np.float64)
    idx = np.arange(skip, skip + len(psnrs))
    lab = None
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if len(labels) != skip + len(psnrs):
            raise ValueError(f"clip {clip_id}: {len(labels)} labels for {skip + len(psnrs)} frames")
        lab = labels[skip:]
    return ClipScores(clip_id, psnrs, normality_scores(psnrs), lab, idx, skip)


@dataclass
class EvalSummary:
    auc: float | None
    score_gap: float | None
    frames_scored: int
    clips: int
    per_clip: dict[str, dict[str, float]] = field(default_factory=dict)


def summarize(clips: Iterable[ClipScores]) -> EvalSummary:
    """Concatenate every clip's normalized scores and compute one ROC over all frames."""
    clips = list(clips)
    per_clip = {
        c.clip_id: {
            "psnr_min": float(np.min(c.psnr)),
            "psnr_max": float(np.max(c.psnr)),
            "score_min": float(np.min(c.scores)),
            "score_max": float(np.max(c.scores)),
        }
        for c in clips
    }
    n = sum(len(c.scores) for c in clips)
    if not clips or any(c.labels is None for c in clips):
        return EvalSummary(None, None, n, len(clips), per_clip)
    s = np.concatenate([c.scores for c in clips])
    y = np.concatenate([c.labels for c in clips])
    if y.min() == y.max():
        return EvalSummary(None, None, n, len(clips), per_clip)
    return EvalSummary(roc_auc(s, y), score_gap(s, y), n, len(clips), per_clip)


def _fmt(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else str(v)


def write_scores_csv(path: str | Path, clips: Iterable[ClipScores], header: dict[str, str] | None = None) -> None:
    path = Path(path)
    with path.open("w", newline="") as f:
        for key, value in (header or {}).items():
            f.write(f"# {key}={value}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["clip_id", "frame_index", "psnr", "s_t", "label"])
        for c in clips:
            for i in range(len(c.scores)):
                label = "" if c.labels is None else int(c.labels[i])
                w.writerow([c.clip_id, int(c.frame_index[i]), _fmt(c.psnr[i]), _fmt(c.scores[i]), label])


def read_scores_csv(path: str | Path) -> list[ClipScores]:
    """Parse a scores CSV back into clips; malformed rows raise with their line number."""
    rows: dict[str, list[tuple[int, float, float, int | None]]] = {}
    header_seen = False
    with Path(path).open() as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            cells = next(csv.reader([line]))
            if not header_seen:
                if cells != ["clip_id", "frame_index", "psnr", "s_t", "label"]:
                    raise ValueError(f"{path}:{lineno}: unexpected header {cells}")
                header_seen = True
                continue
            if len(cells) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(cells)}")
            try:
                row = (
                    int(cells[1]),
                    float(cells[2]),
                    float(cells[3]),
                    None if cells[4] == "" else int(cells[4]),
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            rows.setdefault(cells[0], []).append(row)
    if not header_seen:
        raise ValueError(f"{path}: no header row")
    clips = []
    for clip_id, r in rows.items():
        idx, ps, st, lab = zip(*r)
        labels = None if any(v is None for v in lab) else np.array(lab, dtype=np.int64)
        clips.append(ClipScores(clip_id, np.array(ps), np.array(st), labels, np.array(idx), skip=int(idx[0])))
    return clips


def write_metrics(path: str | Path, values: dict) -> None:
    """Flat JSON object, keys sorted, one key per line."""
    Path(path).write_text(json.dumps(values, indent=1, sort_keys=True) + "\n")


def read_metrics(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
