"""Prediction objective (L1 + global SSIM) and PSNR."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, as_tensor, tabs

# stabilizers for a dynamic range of 2 ([-1, 1] frames)
DYNAMIC_RANGE = 2.0
C1 = (0.01 * DYNAMIC_RANGE) ** 2
C2 = (0.03 * DYNAMIC_RANGE) ** 2


@dataclass(frozen=True)
class LossWeights:
    pixel: float = 0.25
    structure: float = 0.75

    def __post_init__(self):
        if self.pixel < 0 or self.structure < 0:
            raise ValueError(f"loss weights must be non-negative, got {self}")


def _check_pair(pred, target) -> tuple[Tensor, Tensor]:
    pred = as_tensor(pred)
    target = as_tensor(target, like=pred)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: prediction {pred.shape} vs target {target.shape}")
    return pred, target


def l1_loss(pred, target) -> Tensor:
    """Mean absolute error over every element."""
    pred, target = _check_pair(pred, target)
    return tabs(pred - target).mean()


def ssim_loss(pred, target, c1: float = C1, c2: float = C2) -> Tensor:
    """1 - SSIM using whole-frame statistics.

    Mean, (population) variance and covariance are taken over the last two
    axes; any leading axes index independent frames and their losses are
    averaged.
    """
    pred, target = _check_pair(pred, target)
    if pred.ndim < 2:
        raise ValueError(f"ssim_loss needs at least [H, W] inputs, got {pred.shape}")
    axes = (-2, -1)
    mu_p = pred.mean(axes, keepdims=True)
    mu_t = target.mean(axes, keepdims=True)
    dp = pred - mu_p
    dt = target - mu_t
    var_p = (dp * dp).mean(axes)
    var_t = (dt * dt).mean(axes)
    cov = (dp * dt).mean(axes)
    mu_p = mu_p.reshape(var_p.shape)
    mu_t = mu_t.reshape(var_t.shape)
    num = (2.0 * mu_p * mu_t + c1) * (2.0 * cov + c2)
    den = (mu_p * mu_p + mu_t * mu_t + c1) * (var_p + var_t + c2)
    return (1.0 - num / den).mean()


def prediction_loss(pred, target, weights: LossWeights = LossWeights()) -> Tensor:
    return weights.pixel * l1_loss(pred, target) + weights.structure * ssim_loss(pred, target)


class PerfectPrediction(ArithmeticError):
    """Prediction equals the target, so the MSE is zero."""


class DegeneratePeak(ArithmeticError):
    """max(prediction) <= 0, so the PSNR logarithm is undefined."""


def psnr(pred, target) -> float:
    """10*log10(max(pred) / MSE) in dB.

    The numerator is the maximum of the predicted frame, not a squared peak
    value.
    """
    pred = np.asarray(pred.data if isinstance(pred, Tensor) else pred, dtype=np.float64)
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: prediction {pred.shape} vs target {target.shape}")
    mse = np.mean((pred - target) ** 2)
    if mse == 0:
        raise PerfectPrediction("prediction equals target")
    peak = pred.max()
    if peak <= 0:
        raise DegeneratePeak(f"max(prediction) = {peak} is not positive")
    return float(10.0 * np.log10(peak / mse))
