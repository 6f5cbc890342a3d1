"""3D convolution, transposed convolution, batch norm and activations.

Convolutions are lowered to one GEMM per call. Inputs are moved to a
channels-last layout, the kernel-offset slices are gathered into a column
matrix, and only the "live" offsets are kept. A kernel tap is live along an
axis when at least one of its sample positions falls inside the unpadded
input. Dead taps would only ever multiply zero padding, so dropping them
changes nothing numerically and saves work. The typical case is a temporal
kernel of 3 over a single frame, where 2 of the 3 taps are dead.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .tensor import Tensor, make_result

Triple = tuple[int, int, int]


def _triple(v) -> Triple:
    if isinstance(v, int):
        return (v, v, v)
    v = tuple(int(i) for i in v)
    if len(v) != 3:
        raise ValueError(f"expected 3 values, got {v}")
    return v  # type: ignore[return-value]


def conv_out_size(d: int, k: int, s: int, p: int) -> int:
    return (d + 2 * p - k) // s + 1


def deconv_out_size(d: int, k: int, s: int, p: int, op: int = 0) -> int:
    return (d - 1) * s - 2 * p + k + op


def _live_taps(n_pos: int, k: int, s: int, p: int, extent: int) -> list[int]:
    # tap a is live iff some position i in [0, n_pos) has 0 <= i*s + a - p < extent
    return [a for a in range(k) if any(0 <= i * s + a - p < extent for i in range(n_pos))]


def _ensure_batched(x: Tensor) -> tuple[np.ndarray, bool]:
    if x.ndim == 5:
        return x.data, False
    if x.ndim == 4:
        return x.data[None], True
    raise ValueError(f"expected [C,T,H,W] or [B,C,T,H,W] input, got shape {x.shape}")


def _gather(src: np.ndarray, taps, stride: Triple, out_dims: Triple) -> np.ndarray:
    """Column matrix [B, *out_dims, n_taps, C] from a channels-last padded source."""
    B, C = src.shape[0], src.shape[-1]
    To, Ho, Wo = out_dims
    sT, sH, sW = stride
    cols = np.empty((B, To, Ho, Wo, len(taps), C), dtype=src.dtype)
    for j, (a, b, c) in enumerate(taps):
        cols[:, :, :, :, j, :] = src[:, a : a + sT * To : sT, b : b + sH * Ho : sH, c : c + sW * Wo : sW, :]
    return cols


def _scatter_add(dst: np.ndarray, cols: np.ndarray, taps, stride: Triple) -> None:
    """Adjoint of :func:`_gather`; accumulates ``cols`` into ``dst`` in place."""
    To, Ho, Wo = cols.shape[1:4]
    sT, sH, sW = stride
    for j, (a, b, c) in enumerate(taps):
        dst[:, a : a + sT * To : sT, b : b + sH * Ho : sH, c : c + sW * Wo : sW, :] += cols[:, :, :, :, j, :]


def _channels_last(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x.transpose(0, 2, 3, 4, 1))


def _channels_first(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x.transpose(0, 4, 1, 2, 3))


def conv3d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride=1, padding=0) -> Tensor:
    """Cross-correlation of [B,Cin,T,H,W] input with a [Cout,Cin,kT,kH,kW] kernel."""
    xd, squeeze = _ensure_batched(x)
    if weight.ndim != 5:
        raise ValueError(f"conv3d weight must be 5-D [Cout,Cin,kT,kH,kW], got {weight.shape}")
    if xd.shape[1] != weight.shape[1]:
        raise ValueError(
            f"conv3d channel mismatch: input shape {x.shape} has {xd.shape[1]} channels, "
            f"weight shape {weight.shape} expects {weight.shape[1]}"
        )
    stride, padding = _triple(stride), _triple(padding)
    B, Cin, *dims = xd.shape
    Cout, _, *ks = weight.shape
    out_dims = tuple(conv_out_size(d, k, s, p) for d, k, s, p in zip(dims, ks, stride, padding))
    if any(d + 2 * p < k for d, k, p in zip(dims, ks, padding)) or min(out_dims) < 1:
        raise ValueError(f"conv3d kernel {tuple(ks)} does not fit input {tuple(dims)} with padding {padding}")

    live = [_live_taps(o, k, s, p, d) for o, k, s, p, d in zip(out_dims, ks, stride, padding, dims)]
    taps = list(product(*live))
    pt, ph, pw = padding
    xp = np.pad(_channels_last(xd), ((0, 0), (pt, pt), (ph, ph), (pw, pw), (0, 0)))
    cols = _gather(xp, taps, stride, out_dims).reshape(-1, len(taps) * Cin)
    ia, ib, ic = (np.array([t[i] for t in taps]) for i in range(3))
    # [n_taps, Cin, Cout] -> [(n_taps*Cin), Cout]
    wmat = weight.data[:, :, ia, ib, ic].transpose(2, 1, 0).reshape(len(taps) * Cin, Cout)
    out = cols @ wmat
    if bias is not None:
        out += bias.data
    out = _channels_first(out.reshape(B, *out_dims, Cout))
    if squeeze:
        out = out[0]

    def bw(g):
        gb = g if not squeeze else g[None]
        gm = _channels_last(gb).reshape(-1, Cout)
        gw = gx = gbias = None
        if weight.requires_grad:
            gw = np.zeros_like(weight.data)
            gw[:, :, ia, ib, ic] = (cols.T @ gm).reshape(len(taps), Cin, Cout).transpose(2, 1, 0)
        if bias is not None and bias.requires_grad:
            gbias = gm.sum(axis=0)
        if x.requires_grad:
            gcols = (gm @ wmat.T).reshape(B, *out_dims, len(taps), Cin)
            gxp = np.zeros_like(xp)
            _scatter_add(gxp, gcols, taps, stride)
            gx = _channels_first(gxp[:, pt : pt + dims[0], ph : ph + dims[1], pw : pw + dims[2], :])
            if squeeze:
                gx = gx[0]
        return gx, gw, gbias

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(out, parents, bw)


def deconv3d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride=1,
    padding=0,
    output_padding=0,
) -> Tensor:
    """Transposed convolution with a [Cin,Cout,kT,kH,kW] kernel.

    Output size per axis is ``(D-1)*s - 2p + k + output_padding``; this is the
    adjoint of :func:`conv3d` with the same kernel, stride and padding.
    """
    xd, squeeze = _ensure_batched(x)
    if weight.ndim != 5:
        raise ValueError(f"deconv3d weight must be 5-D [Cin,Cout,kT,kH,kW], got {weight.shape}")
    if xd.shape[1] != weight.shape[0]:
        raise ValueError(
            f"deconv3d channel mismatch: input shape {x.shape} has {xd.shape[1]} channels, "
            f"weight shape {weight.shape} expects {weight.shape[0]}"
        )
    stride, padding, opad = _triple(stride), _triple(padding), _triple(output_padding)
    B, Cin, *dims = xd.shape
    _, Cout, *ks = weight.shape
    out_dims = tuple(deconv_out_size(d, k, s, p, o) for d, k, s, p, o in zip(dims, ks, stride, padding, opad))
    if min(out_dims) < 1:
        raise ValueError(f"deconv3d produces empty output {out_dims} for input {tuple(dims)}")

    live = [_live_taps(d, k, s, p, o) for d, k, s, p, o in zip(dims, ks, stride, padding, out_dims)]
    taps = list(product(*live))
    ia, ib, ic = (np.array([t[i] for t in taps]) for i in range(3))
    # [Cin, n_taps, Cout] -> [Cin, (n_taps*Cout)]
    wmat = weight.data[:, :, ia, ib, ic].transpose(0, 2, 1).reshape(Cin, len(taps) * Cout)
    xm = _channels_last(xd).reshape(-1, Cin)
    cols = (xm @ wmat).reshape(B, *dims, len(taps), Cout)
    buf_dims = tuple(
        max((d - 1) * s + k, p + o) for d, k, s, p, o in zip(dims, ks, stride, padding, out_dims)
    )
    buf = np.zeros((B, *buf_dims, Cout), dtype=xd.dtype)
    _scatter_add(buf, cols, taps, stride)
    pt, ph, pw = padding
    To, Ho, Wo = out_dims
    out = buf[:, pt : pt + To, ph : ph + Ho, pw : pw + Wo, :]
    if bias is not None:
        out = out + bias.data
    out = _channels_first(out)
    if squeeze:
        out = out[0]

    def bw(g):
        gb = g if not squeeze else g[None]
        gbuf = np.zeros_like(buf)
        gbuf[:, pt : pt + To, ph : ph + Ho, pw : pw + Wo, :] = _channels_last(gb)
        gcols = _gather(gbuf, taps, stride, tuple(dims)).reshape(-1, len(taps) * Cout)
        gw = gx = gbias = None
        if weight.requires_grad:
            gw = np.zeros_like(weight.data)
            gw[:, :, ia, ib, ic] = (xm.T @ gcols).reshape(Cin, len(taps), Cout).transpose(0, 2, 1)
        if bias is not None and bias.requires_grad:
            gbias = gb.sum(axis=(0, 2, 3, 4))
        if x.requires_grad:
            gx = _channels_first((gcols @ wmat.T).reshape(B, *dims, Cin))
            if squeeze:
                gx = gx[0]
        return gx, gw, gbias

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(out, parents, bw)


@dataclass
class RunningStats:
    """Per-channel running mean/variance owned by one batchnorm layer."""

    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def fresh(cls, channels: int, dtype=np.float32) -> "RunningStats":
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))


def batchnorm3d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running: RunningStats | None,
    training: bool = True,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization over (batch, T, H, W).

    In training mode batch statistics are used and ``running`` is updated in
    place (running variance uses the unbiased estimate). In eval mode the
    running statistics are used and nothing is mutated.
    """
    if x.ndim != 5:
        raise ValueError(f"batchnorm3d expects [B,C,T,H,W], got {x.shape}")
    C = x.shape[1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ValueError(f"gamma/beta must have shape ({C},), got {gamma.shape} and {beta.shape}")
    axes = (0, 2, 3, 4)
    bshape = (1, C, 1, 1, 1)
    xd = x.data
    if training:
        n = xd.size // C
        mu = xd.mean(axis=axes)
        var = xd.var(axis=axes)
        if running is not None:
            unbiased = var * (n / max(n - 1, 1))
            running.mean[...] = (1 - momentum) * running.mean + momentum * mu
            running.var[...] = (1 - momentum) * running.var + momentum * unbiased
    else:
        if running is None:
            raise ValueError("eval-mode batchnorm needs running statistics")
        n = None
        mu, var = running.mean, running.var
    inv_std = (1.0 / np.sqrt(var + eps)).astype(xd.dtype)
    xhat = (xd - mu.reshape(bshape)) * inv_std.reshape(bshape)
    out = xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)

    def bw(g):
        gg = (g * xhat).sum(axis=axes) if gamma.requires_grad else None
        gbeta = g.sum(axis=axes) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            gxhat = g * gamma.data.reshape(bshape)
            if training:
                s1 = gxhat.mean(axis=axes, keepdims=True)
                s2 = (gxhat * xhat).mean(axis=axes, keepdims=True)
                gx = (gxhat - s1 - xhat * s2) * inv_std.reshape(bshape)
            else:
                gx = gxhat * inv_std.reshape(bshape)
        return gx, gg, gbeta

    return make_result(out.astype(xd.dtype, copy=False), (x, gamma, beta), bw)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def bw(g):
        return (g * mask,)

    return make_result(x.data * mask, (x,), bw)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    neg = x.data <= 0
    out = x.data.copy()
    out[neg] *= slope

    def bw(g):
        g = g.copy()
        g[neg] *= slope
        return (g,)

    return make_result(out, (x,), bw)


def activation(x: Tensor, kind: str = "relu", slope: float = 0.2) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    raise ValueError(f"unknown activation {kind!r}")
