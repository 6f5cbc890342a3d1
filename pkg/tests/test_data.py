from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import bilinear_naive

from vadkit.data import (
    ClipManifest,
    FrameError,
    discover_clips,
    load_clip,
    preprocess,
    read_labels,
    read_pnm,
    resize_bilinear,
    sliding_windows,
    to_gray,
    window_indices,
    write_labels,
    write_pgm,
)


@pytest.fixture
def clip_dir(tmp_path):
    rng = np.random.default_rng(0)
    d = tmp_path / "test" / "c0"
    d.mkdir(parents=True)
    frames = [rng.integers(0, 256, size=(6, 9), dtype=np.uint8) for _ in range(10)]
    for t, f in enumerate(frames):
        write_pgm(d / f"{t:05d}.pgm", f)
    write_labels(d / "labels.txt", [1] * 7 + [0] * 3)
    return tmp_path, frames


def test_pgm_round_trip_is_bit_exact(tmp_path):
    f = np.random.default_rng(1).integers(0, 256, size=(13, 17), dtype=np.uint8)
    write_pgm(tmp_path / "a.pgm", f)
    back = read_pnm(tmp_path / "a.pgm")
    assert back.dtype == np.uint8
    np.testing.assert_array_equal(back, f)


def test_ppm_with_comment_header(tmp_path):
    rgb = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
    (tmp_path / "c.ppm").write_bytes(b"P6\n# made by hand\n3 2\n255\n" + rgb.tobytes())
    np.testing.assert_array_equal(read_pnm(tmp_path / "c.ppm"), rgb)


@pytest.mark.parametrize(
    "blob,match",
    [
        (b"P2\n2 2\n255\n0 0 0 0", "unsupported format"),
        (b"P5\n2 2\n65535\n" + bytes(8), "8-bit"),
        (b"P5\n4 4\n255\n" + bytes(3), "truncated"),
        (b"P5\n4", "corrupt header"),
    ],
)
def test_bad_pnm_rejected_with_path(tmp_path, blob, match):
    p = tmp_path / "bad.pgm"
    p.write_bytes(blob)
    with pytest.raises(FrameError, match=match) as info:
        read_pnm(p)
    assert "bad.pgm" in str(info.value)


def test_discover_and_load_clip_preserves_order(clip_dir):
    root, frames = clip_dir
    [m] = discover_clips(root, "test")
    assert m.clip_id == "c0" and len(m) == 10
    np.testing.assert_array_equal(m.labels, [1] * 7 + [0] * 3)
    loaded = load_clip(m)
    for a, b in zip(loaded, frames):
        np.testing.assert_array_equal(a, b)
    assert m.source_dims == (6, 9)


def test_missing_frame_names_file(clip_dir):
    root, _ = clip_dir
    [m] = discover_clips(root, "test")
    (root / "test" / "c0" / "00004.pgm").unlink()
    with pytest.raises(FrameError, match="00004.pgm"):
        load_clip(m)


def test_inconsistent_dims_rejected(clip_dir):
    root, _ = clip_dir
    write_pgm(root / "test" / "c0" / "00003.pgm", np.zeros((5, 9), dtype=np.uint8))
    [m] = discover_clips(root, "test")
    with pytest.raises(FrameError, match="00003.pgm"):
        load_clip(m)


def test_manifest_text_round_trip(tmp_path):
    m = ClipManifest("x", [tmp_path / "a.pgm", tmp_path / "b.pgm"])
    back = ClipManifest.from_text("x", m.to_text())
    assert back.frame_paths == m.frame_paths


def test_label_file_validation(tmp_path):
    (tmp_path / "l.txt").write_text("1\n0\n2\n")
    with pytest.raises(ValueError, match="l.txt:3"):
        read_labels(tmp_path / "l.txt")
    with pytest.raises(ValueError, match="labels"):
        ClipManifest("x", [tmp_path / "a"], labels=np.array([1, 0]))


# ------------------------------------------------------------ preprocessing
def test_affine_endpoints_at_model_size():
    f = np.zeros((240, 360), dtype=np.uint8)
    f[0, 0], f[0, 1] = 255, 0
    out = preprocess(f)
    assert out.dtype == np.float32 and out.shape == (240, 360)
    assert out[0, 0] == 1.0 and out[0, 1] == -1.0


@pytest.mark.parametrize("shape", [(7, 11), (240, 360), (481, 719)])
def test_constant_frame_stays_constant(shape):
    out = preprocess(np.full(shape, 200, dtype=np.uint8))
    np.testing.assert_allclose(out, 200 / 127.5 - 1, rtol=0, atol=1e-6)


def test_checkerboard_downscale_matches_naive_bilinear():
    yy, xx = np.mgrid[0:480, 0:720]
    board = np.where(((yy // 7) + (xx // 5)) % 2 == 0, 255.0, 0.0)
    got = resize_bilinear(board, 240, 360)
    want = bilinear_naive(board, 240, 360)
    assert np.abs(got - want).max() < 1e-6


@settings(max_examples=40, deadline=None)
@given(
    st.integers(1, 30), st.integers(1, 30), st.integers(1, 30), st.integers(1, 30), st.integers(0, 2**31 - 1)
)
def test_resize_matches_naive_for_random_sizes(h, w, oh, ow, seed):
    img = np.random.default_rng(seed).uniform(0, 255, size=(h, w))
    np.testing.assert_allclose(resize_bilinear(img, oh, ow), bilinear_naive(img, oh, ow), atol=1e-9)


def test_rgb_uses_luma_weights():
    px = np.array([[[100, 50, 200]]], dtype=np.uint8)
    assert to_gray(px)[0, 0] == pytest.approx(0.299 * 100 + 0.587 * 50 + 0.114 * 200)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_preprocessed_values_in_range(seed):
    f = np.random.default_rng(seed).integers(0, 256, size=(31, 47), dtype=np.uint8)
    out = preprocess(f, 24, 36)
    assert out.min() >= -1.0 and out.max() <= 1.0


def test_empty_frame_rejected():
    with pytest.raises(FrameError, match="empty"):
        preprocess(np.zeros((0, 5), dtype=np.uint8))


# ------------------------------------------------------------------ windows
def test_window_counts():
    assert window_indices(6, 5) == [(0, 5)]
    assert len(window_indices(105, 5)) == 100
    with pytest.raises(ValueError, match="too short"):
        window_indices(5, 5)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 200), st.integers(1, 8))
def test_window_enumeration_oracle(length, n):
    if length < n + 1:
        return
    expected = []
    for target in range(length):
        first = target - n
        if first >= 0:
            expected.append((first, target))
    assert window_indices(length, n) == expected


def test_sliding_windows_content():
    frames = np.arange(8)[:, None, None] * np.ones((8, 2, 3))
    pairs = sliding_windows(frames, 5)
    assert len(pairs) == 3
    cuboid, target = pairs[1]
    assert cuboid.shape == (1, 5, 2, 3) and target.shape == (1, 2, 3)
    assert [float(cuboid[0, i, 0, 0]) for i in range(5)] == [1, 2, 3, 4, 5]
    assert float(target[0, 0, 0]) == 6
