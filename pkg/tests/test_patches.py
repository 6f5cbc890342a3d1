from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vadkit.patches import (
    PatchRegion,
    TransformPolicy,
    TransformSpec,
    add_gaussian_noise,
    apply_patch_anomaly,
    build_cuboid,
    draw_spec,
    inverse_permutation,
    margin_rows,
    replay_spec,
    sample_patch_region,
    srt,
    tmt,
)

N_CUBOIDS = 1000


def random_case(seed: int):
    """A small random cuboid with a random square region inside it."""
    r = np.random.default_rng(seed)
    n = int(r.integers(2, 7))
    H, W = int(r.integers(8, 30)), int(r.integers(8, 30))
    size = int(r.integers(1, min(H, W) + 1))
    cuboid = r.uniform(-1, 1, size=(1, n, H, W)).astype(np.float32)
    region = PatchRegion(int(r.integers(0, W - size + 1)), int(r.integers(0, H - size + 1)), size, size)
    return r, cuboid, region


def outside_mask(cuboid, region):
    mask = np.ones(cuboid.shape, dtype=bool)
    rows, cols = region.slices()
    mask[:, :, rows, cols] = False
    return mask


# -------------------------------------------------------------- cuboid build
def test_build_cuboid_stacks_in_order():
    frames = [np.full((6, 8), t / 10, dtype=np.float32) for t in range(5)]
    c = build_cuboid(frames)
    assert c.shape == (1, 5, 6, 8)
    for t in range(5):
        np.testing.assert_array_equal(c[0, t], frames[t])


@pytest.mark.parametrize(
    "frames,match",
    [
        ([np.zeros((4, 4))] * 4, "expected 5 frames"),
        ([np.zeros((4, 4))] * 4 + [np.zeros((4, 5))], "frame 4"),
        ([np.zeros((4, 4))] * 4 + [np.full((4, 4), 2.0)], "outside"),
    ],
)
def test_build_cuboid_rejects_bad_input(frames, match):
    with pytest.raises(ValueError, match=match):
        build_cuboid(frames)


# ------------------------------------------------------------ region sampler
def test_margin_rounding():
    assert margin_rows(240, 0.125) == 30
    assert margin_rows(112, 0.125) == 14
    assert margin_rows(4, 0.125) == 1  # 0.5 rounds up


def test_region_bounds_over_1e5_samples():
    rng = np.random.default_rng(1)
    regions = [sample_patch_region(rng) for _ in range(100_000)]
    xs = np.array([r.x for r in regions])
    ys = np.array([r.y for r in regions])
    assert (ys.min(), ys.max()) == (30, 150)
    assert (xs.min(), xs.max()) == (0, 300)


def test_zero_margin_range():
    rng = np.random.default_rng(2)
    ys = {sample_patch_region(rng, margin_frac=0.0).y for _ in range(20_000)}
    assert min(ys) == 0 and max(ys) == 180


def test_region_deterministic():
    a = sample_patch_region(np.random.default_rng(9))
    b = sample_patch_region(np.random.default_rng(9))
    assert a == b


def test_region_too_large_rejected():
    with pytest.raises(ValueError, match="does not fit"):
        sample_patch_region(np.random.default_rng(0), height=70, width=360, patch_h=60)


# ------------------------------------------------------------ transform laws
@pytest.mark.transforms
def test_srt_identity_and_involution_on_many_cuboids():
    for seed in range(N_CUBOIDS):
        r, c, region = random_case(seed)
        n = c.shape[1]
        np.testing.assert_array_equal(srt(c, region, (0,) * n), c)
        once = srt(c, region, (180,) * n)
        np.testing.assert_array_equal(srt(once, region, (180,) * n), c)
        quarter = srt(c, region, (90,) * n)
        np.testing.assert_array_equal(srt(quarter, region, (270,) * n), c)


@pytest.mark.transforms
def test_srt_preserves_outside_and_per_frame_multiset():
    for seed in range(N_CUBOIDS):
        r, c, region = random_case(seed)
        n = c.shape[1]
        dirs = tuple(int(d) for d in r.choice([0, 90, 180, 270], size=n))
        out = srt(c, region, dirs)
        mask = outside_mask(c, region)
        np.testing.assert_array_equal(out[mask], c[mask])
        rows_cols = region.slices()
        for i in range(n):
            before = np.sort(c[0, i][rows_cols].ravel())
            after = np.sort(out[0, i][rows_cols].ravel())
            np.testing.assert_array_equal(before, after)


@pytest.mark.transforms
def test_tmt_identity_inverse_outside_and_stack_multiset():
    for seed in range(N_CUBOIDS):
        r, c, region = random_case(seed)
        n = c.shape[1]
        np.testing.assert_array_equal(tmt(c, region, range(n)), c)
        perm = tuple(int(p) for p in r.permutation(n))
        out = tmt(c, region, perm)
        mask = outside_mask(c, region)
        np.testing.assert_array_equal(out[mask], c[mask])
        rows, cols = region.slices()
        np.testing.assert_array_equal(np.sort(out[:, :, rows, cols], axis=None), np.sort(c[:, :, rows, cols], axis=None))
        for i in range(n):
            np.testing.assert_array_equal(out[0, i, rows, cols], c[0, perm[i], rows, cols])
        np.testing.assert_array_equal(tmt(out, region, inverse_permutation(perm)), c)


def test_tmt_example_sequence():
    c = np.zeros((1, 5, 8, 8), dtype=np.float32)
    for t in range(5):
        c[0, t] = t
    region = PatchRegion(2, 2, 4, 4)
    out = tmt(c, region, (4, 1, 0, 3, 2))
    assert [float(out[0, i, 3, 3]) for i in range(5)] == [4.0, 1.0, 0.0, 3.0, 2.0]
    assert [float(out[0, i, 0, 0]) for i in range(5)] == [0.0, 1.0, 2.0, 3.0, 4.0]


def test_srt_rotation_is_counter_clockwise():
    c = np.zeros((1, 1, 2, 2), dtype=np.float32)
    c[0, 0] = [[1, 2], [3, 4]]
    out = srt(c, PatchRegion(0, 0, 2, 2), (90,))
    np.testing.assert_array_equal(out[0, 0], [[2, 4], [1, 3]])


def test_invalid_inputs_rejected():
    c = np.zeros((1, 3, 10, 10), dtype=np.float32)
    with pytest.raises(ValueError, match="not a permutation"):
        tmt(c, PatchRegion(0, 0, 4, 4), (0, 0, 1))
    with pytest.raises(ValueError, match="non-square"):
        srt(c, PatchRegion(0, 0, 4, 3), (90, 0, 0))
    with pytest.raises(ValueError, match="outside"):
        tmt(c, PatchRegion(8, 0, 4, 4), (1, 0, 2))


def test_transforms_touch_only_the_patch(counters):
    c = np.zeros((1, 5, 240, 360), dtype=np.float32)
    rng = np.random.default_rng(0)
    for _ in range(50):
        apply_patch_anomaly(c, rng, TransformPolicy.TMT_AND_SRT, inplace=True)
    assert counters.full_copies == 0
    assert counters.pixels_written == 50 * 2 * 5 * 60 * 60


# ---------------------------------------------------------------- policies
def test_baseline_is_passthrough():
    c = np.random.default_rng(0).uniform(-1, 1, size=(1, 5, 40, 60)).astype(np.float32)
    out, spec = apply_patch_anomaly(c, np.random.default_rng(1), "baseline", patch_size=10)
    assert spec.mode == "none" and spec == TransformSpec.identity(5)
    np.testing.assert_array_equal(out, c)


def test_coin_frequency():
    rng = np.random.default_rng(7)
    modes = [draw_spec(rng, TransformPolicy.TMT_OR_SRT, 5, 240, 360).mode for _ in range(10_000)]
    freq = modes.count("tmt") / len(modes)
    assert abs(freq - 0.5) <= 0.02
    assert set(modes) == {"tmt", "srt"}


def test_chunk_variant_shares_one_direction():
    rng = np.random.default_rng(3)
    for _ in range(500):
        spec = draw_spec(rng, TransformPolicy.TMT_OR_SRT_CHUNK, 5, 240, 360)
        if spec.mode == "srt":
            assert len(set(spec.directions)) == 1
        else:
            assert spec.directions == (0,) * 5


def test_tmt_permutation_is_never_identity():
    rng = np.random.default_rng(4)
    for _ in range(2000):
        assert draw_spec(rng, "tmt", 5, 240, 360).permutation != (0, 1, 2, 3, 4)


@pytest.mark.parametrize("policy", list(TransformPolicy))
def test_replay_reproduces_every_policy(policy):
    rng = np.random.default_rng(11)
    for _ in range(50):
        c = rng.uniform(-1, 1, size=(1, 5, 48, 72)).astype(np.float32)
        out, spec = apply_patch_anomaly(c, rng, policy, patch_size=12)
        np.testing.assert_array_equal(replay_spec(c, spec), out)
        back = TransformSpec.from_record(spec.to_record())
        assert back == spec


def test_both_mode_mixes_then_rotates():
    rng = np.random.default_rng(5)
    c = rng.uniform(-1, 1, size=(1, 5, 30, 30)).astype(np.float32)
    out, spec = apply_patch_anomaly(c, rng, "tmt-and-srt", patch_size=10)
    expected = srt(tmt(c, spec.region, spec.permutation), spec.region, spec.directions)
    np.testing.assert_array_equal(out, expected)


@pytest.mark.transforms
@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([p.value for p in TransformPolicy]))
def test_outside_region_untouched_for_any_policy(seed, policy):
    rng = np.random.default_rng(seed)
    c = rng.uniform(-1, 1, size=(1, 5, 40, 56)).astype(np.float32)
    out, spec = apply_patch_anomaly(c, rng, policy, patch_size=8)
    if spec.region is None:
        np.testing.assert_array_equal(out, c)
    else:
        mask = outside_mask(c, spec.region)
        np.testing.assert_array_equal(out[mask], c[mask])


# ------------------------------------------------------------------- noise
def test_zero_sigma_is_identity():
    c = np.random.default_rng(0).uniform(-1, 1, size=(1, 5, 8, 8)).astype(np.float32)
    np.testing.assert_array_equal(add_gaussian_noise(c, np.random.default_rng(1), sigma=0.0), c)


@pytest.mark.parametrize("sigma", [0.01, 0.02, 0.03])
def test_noise_variance(sigma):
    c = np.zeros((1, 5, 240, 360), dtype=np.float64)
    out = add_gaussian_noise(c, np.random.default_rng(2), sigma=sigma)
    assert abs((out - c).var() / sigma**2 - 1) < 0.05
    assert abs((out - c).mean()) < 3 * sigma / np.sqrt(out.size)


def test_noise_sigma_drawn_within_range_and_deterministic():
    c = np.zeros((1, 5, 60, 90), dtype=np.float64)
    for seed in range(50):
        a = add_gaussian_noise(c, np.random.default_rng(seed))
        b = add_gaussian_noise(c, np.random.default_rng(seed))
        np.testing.assert_array_equal(a, b)
        assert a.std() <= 0.03 * 1.05


def test_noise_is_not_clipped():
    c = np.ones((1, 5, 50, 50), dtype=np.float64)
    out = add_gaussian_noise(c, np.random.default_rng(0), sigma=0.03)
    assert out.max() > 1.0
