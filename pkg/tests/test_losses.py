from __future__ import annotations

import math

import numpy as np
import pytest
from oracles import ssim_direct

from vadkit.losses import (
    C1,
    C2,
    DegeneratePeak,
    LossWeights,
    PerfectPrediction,
    l1_loss,
    prediction_loss,
    psnr,
    ssim_loss,
)
from vadkit.tensor import Tensor


def _pair(seed, shape=(1, 1, 1, 6, 7)):
    r = np.random.default_rng(seed)
    target = r.uniform(-1, 1, size=shape)
    pred = np.clip(target + r.normal(0, 0.3, size=shape), -1, 1)
    return pred, target


def test_stabilizers_for_unit_dynamic_range_two():
    assert C1 == pytest.approx(0.02**2)
    assert C2 == pytest.approx(0.06**2)


@pytest.mark.oracle
@pytest.mark.parametrize("seed", range(10))
def test_ssim_loss_matches_direct_formula(seed):
    pred, target = _pair(seed, (4, 5))
    got = ssim_loss(Tensor(pred, dtype=np.float64), target).item()
    assert got == pytest.approx(1.0 - ssim_direct(pred, target, C1, C2), abs=1e-6)


def test_ssim_loss_averages_independent_frames():
    a, b = _pair(1, (3, 4, 4))
    per_frame = [1.0 - ssim_direct(a[i], b[i], C1, C2) for i in range(3)]
    assert ssim_loss(Tensor(a, dtype=np.float64), b).item() == pytest.approx(np.mean(per_frame), abs=1e-12)


def test_ssim_of_identical_frames_is_one():
    a, _ = _pair(2)
    assert ssim_loss(Tensor(a, dtype=np.float64), a).item() == pytest.approx(0.0, abs=1e-12)


@pytest.mark.oracle
@pytest.mark.parametrize("seed", range(10))
def test_psnr_matches_direct_formula(seed):
    pred, target = _pair(seed, (5, 6))
    pred = np.abs(pred) + 0.01  # keep the peak positive
    mse = sum((p - t) ** 2 for p, t in zip(pred.ravel(), target.ravel())) / pred.size
    assert psnr(pred, target) == pytest.approx(10 * math.log10(pred.max() / mse), abs=1e-6)


def test_psnr_raises_on_perfect_prediction():
    a = np.full((2, 2), 0.5)
    with pytest.raises(PerfectPrediction):
        psnr(a, a)


def test_psnr_raises_on_non_positive_peak():
    with pytest.raises(DegeneratePeak):
        psnr(np.full((2, 2), -0.5), np.zeros((2, 2)))


def test_l1_is_mean_absolute_error():
    pred, target = _pair(3)
    assert l1_loss(Tensor(pred, dtype=np.float64), target).item() == pytest.approx(np.abs(pred - target).mean())


def test_prediction_loss_weights():
    pred, target = _pair(4)
    p = Tensor(pred, dtype=np.float64)
    expected = 0.25 * l1_loss(p, target).item() + 0.75 * ssim_loss(p, target).item()
    assert prediction_loss(p, target).item() == pytest.approx(expected, abs=1e-12)
    only_l1 = prediction_loss(p, target, LossWeights(1.0, 0.0)).item()
    assert only_l1 == pytest.approx(l1_loss(p, target).item())


def test_shape_mismatch_is_rejected():
    with pytest.raises(ValueError, match="shape mismatch"):
        l1_loss(Tensor(np.zeros((2, 3))), np.zeros((3, 2)))


@pytest.mark.gradient
@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("which", ["l1", "ssim", "total"])
def test_loss_gradients(gradcheck, seed, which):
    pred, target = _pair(500 + seed, (2, 1, 1, 4, 5))
    fn = {"l1": l1_loss, "ssim": ssim_loss, "total": prediction_loss}[which]
    assert gradcheck(lambda p: fn(p, target), [pred]) < 1e-4


def _f64(a):
    return Tensor(np.asarray(a, dtype=np.float64), dtype=np.float64)


def test_l1_uniform_offset():
    target = np.random.default_rng(5).uniform(-1, 1, size=(1, 1, 1, 4, 4))
    assert l1_loss(_f64(target + 0.5), target).item() == pytest.approx(0.5, abs=1e-12)
    assert l1_loss(_f64(target), target).item() == 0.0


def test_prediction_loss_zero_for_identical_frames():
    _, target = _pair(6)
    assert prediction_loss(_f64(target), target).item() == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_ssim_loss_symmetric_and_bounded(seed):
    a, b = _pair(seed)
    r = np.random.default_rng(seed)
    c = r.uniform(-1, 1, size=a.shape)
    assert ssim_loss(_f64(a), b).item() == ssim_loss(_f64(b), a).item()
    for x, y in ((a, b), (a, c), (c, -c)):
        assert 0.0 <= ssim_loss(_f64(x), y).item() <= 2.0


def test_psnr_twenty_db_example():
    target = np.zeros((8, 8))
    target[0, 0] = 0.9
    pred = np.clip(target + 0.1, 0, 1)  # max 1.0, |diff| = 0.1 everywhere
    assert psnr(pred, target) == pytest.approx(20.0, abs=1e-9)


def test_doubling_mse_costs_three_decibels():
    r = np.random.default_rng(9)
    target = r.uniform(0, 0.5, size=(10, 10))
    err = r.choice([-1.0, 1.0], size=target.shape) * 0.05
    pred = target + err
    pred[0, 0] = 1.0
    target[0, 0] = 1.0 - 0.05
    pred2 = target + err * math.sqrt(2)
    pred2[0, 0] = 1.0
    target2 = target.copy()
    target2[0, 0] = 1.0 - 0.05 * math.sqrt(2)
    assert psnr(pred, target) - psnr(pred2, target2) == pytest.approx(10 * math.log10(2), abs=1e-9)
