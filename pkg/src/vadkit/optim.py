"""Parameter storage, Adam, and the cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class ParamStore:
    """Named trainable tensors plus Adam moment buffers.

    Paths are unique, dotted strings (``enc1.weight``). Insertion order is
    preserved and is the serialization order.
    """

    params: dict[str, Tensor] = field(default_factory=dict)
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def add(self, path: str, tensor: Tensor) -> Tensor:
        if path in self.params:
            raise KeyError(f"duplicate parameter path {path!r}")
        tensor.requires_grad = True
        tensor.name = path
        self.params[path] = tensor
        return tensor

    def __getitem__(self, path: str) -> Tensor:
        return self.params[path]

    def __iter__(self):
        return iter(self.params.items())

    def __len__(self) -> int:
        return len(self.params)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def count(self) -> int:
        return sum(p.size for p in self.params.values())


def adam_step(
    store: ParamStore,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, in place."""
    missing = [path for path, p in store if p.grad is None]
    if missing:
        raise ValueError(f"no gradient for parameter {missing[0]!r}")
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for path, p in store:
        g = p.grad
        if path not in store.m:
            store.m[path] = np.zeros_like(p.data)
            store.v[path] = np.zeros_like(p.data)
        m, v = store.m[path], store.v[path]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        update = (lr / c1) * m / (np.sqrt(v / c2) + eps)
        p.data -= update.astype(p.dtype, copy=False)


@dataclass(frozen=True)
class LrSchedule:
    lr_max: float = 2e-4
    lr_min: float = 1e-4
    total_steps: int = 10

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError("total_steps must be positive")


def lr_at(schedule: LrSchedule, step: int) -> float:
    """Cosine annealing from ``lr_max`` at step 0 to ``lr_min`` at ``total_steps``.

    Out-of-range steps clamp to the endpoints.
    """
    step = min(max(step, 0), schedule.total_steps)
    frac = step / schedule.total_steps
    return schedule.lr_min + 0.5 * (schedule.lr_max - schedule.lr_min) * (1.0 + math.cos(math.pi * frac))
