"""Score-versus-frame curves as standalone SVG files."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .metrics import ClipScores, read_scores_csv

WIDTH, HEIGHT = 720, 240
MARGIN = 40
SCORE_COLOR = "#d62728"
LABEL_COLOR = "#1f77b4"


def read_csv_header(path: str | Path) -> dict[str, str]:
    """``# key=value`` lines at the top of a scores CSV."""
    header = {}
    with Path(path).open() as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            header[key.strip()] = value.strip()
    return header


def _abnormal_runs(labels: np.ndarray) -> list[tuple[int, int]]:
    """Half-open index ranges where the label is 0."""
    runs, start = [], None
    for i, v in enumerate(labels):
        if v == 0 and start is None:
            start = i
        elif v != 0 and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(labels)))
    return runs


def clip_svg(clip: ClipScores, header: dict[str, str]) -> str:
    frames = clip.frame_index.astype(np.float64)
    lo, hi = frames[0], max(frames[-1], frames[0] + 1)
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def px(f):
        return MARGIN + (f - lo) / (hi - lo) * pw

    def py(v):  # the score axis is always [0, 1]
        return MARGIN + (1.0 - v) * ph

    meta = " ".join(f"{k}={v}" for k, v in sorted(header.items()))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f"<!-- clip={escape(clip.clip_id)} {escape(meta)} -->",
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if clip.labels is not None:
        step = pw / max(len(frames) - 1, 1)
        for a, b in _abnormal_runs(clip.labels):
            x0 = px(frames[a]) - step / 2
            x1 = px(frames[b - 1]) + step / 2
            parts.append(
                f'<rect class="abnormal" x="{x0:.2f}" y="{MARGIN}" width="{x1 - x0:.2f}" '
                f'height="{ph}" fill="{LABEL_COLOR}" fill-opacity="0.12"/>'
            )
        label_pts = " ".join(f"{px(f):.2f},{py(v):.2f}" for f, v in zip(frames, clip.labels))
        parts.append(
            f'<polyline class="labels" points="{label_pts}" fill="none" stroke="{LABEL_COLOR}" stroke-width="1.5"/>'
        )
    score_pts = " ".join(f"{px(f):.2f},{py(v):.2f}" for f, v in zip(frames, clip.scores))
    parts.append(
        f'<polyline class="scores" points="{score_pts}" fill="none" stroke="{SCORE_COLOR}" stroke-width="1.5"/>'
    )
    # axes, ticks at 0 and 1
    parts += [
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{MARGIN + ph}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN + ph}" x2="{MARGIN + pw}" y2="{MARGIN + ph}" stroke="black"/>',
        f'<text x="{MARGIN - 6}" y="{py(1.0) + 4}" font-size="11" text-anchor="end">1</text>',
        f'<text x="{MARGIN - 6}" y="{py(0.0) + 4}" font-size="11" text-anchor="end">0</text>',
        f'<text x="{MARGIN}" y="{MARGIN + ph + 16}" font-size="11">{int(lo)}</text>',
        f'<text x="{MARGIN + pw}" y="{MARGIN + ph + 16}" font-size="11" text-anchor="end">{int(frames[-1])}</text>',
        f'<text x="{MARGIN}" y="{MARGIN - 10}" font-size="12">{escape(clip.clip_id)}</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


def series_text(clip: ClipScores, header: dict[str, str]) -> str:
    lines = [f"# {k}={v}" for k, v in sorted(header.items())]
    lines.append("frame_index\ts_t\tlabel")
    for i in range(len(clip.scores)):
        label = "" if clip.labels is None else str(int(clip.labels[i]))
        lines.append(f"{int(clip.frame_index[i])}\t{float(clip.scores[i])!r}\t{label}")
    return "\n".join(lines) + "\n"


def plot_scores(scores_csv: str | Path, out_dir: str | Path) -> list[Path]:
    """One ``<clip>.svg`` and one ``<clip>.tsv`` per clip; returns the SVG paths."""
    clips = read_scores_csv(scores_csv)
    header = read_csv_header(scores_csv)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for clip in clips:
        svg = out / f"{clip.clip_id}.svg"
        svg.write_text(clip_svg(clip, header))
        (out / f"{clip.clip_id}.tsv").write_text(series_text(clip, header))
        written.append(svg)
    return written
