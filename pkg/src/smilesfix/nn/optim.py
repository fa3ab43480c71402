"""Adam, cosine learning-rate schedule and global-norm gradient clipping."""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import torch

from smilesfix.errors import ShapeMismatch, StepOutOfRange


def cosine_lr(step: int, total: int, lr_max: float, lr_min: float = 0.0) -> float:
    if not 0 <= step <= total:
        raise StepOutOfRange(f"step {step} outside [0, {total}]")
    if total == 0:
        return lr_max
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total))


def global_norm(grads: Iterable[torch.Tensor | None]) -> float:
    total = 0.0
    for g in grads:
        if g is not None:
            total += float((g.detach().to(torch.float64) ** 2).sum())
    return math.sqrt(total)


def clip_gradients(grads: Sequence[torch.Tensor | None], max_norm: float) -> float:
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    if not max_norm > 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            if g is not None:
                g.mul_(scale)
    return norm


class Adam:
    """Adam with bias correction. State is ``step`` plus first/second moments per parameter."""

    def __init__(self, params: Sequence[torch.Tensor], lr: float = 3e-4, betas=(0.9, 0.999),
                 eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [torch.zeros_like(p) for p in self.params]
        self.v = [torch.zeros_like(p) for p in self.params]

    @torch.no_grad()
    def step(self, grads: Sequence[torch.Tensor | None] | None = None, lr: float | None = None) -> None:
        if grads is None:
            grads = [p.grad for p in self.params]
        if len(grads) != len(self.params):
            raise ShapeMismatch(f"{len(grads)} grads for {len(self.params)} params")
        lr = self.lr if lr is None else lr
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g is None:
                continue
            if g.shape != p.shape:
                raise ShapeMismatch(f"grad {tuple(g.shape)} for param {tuple(p.shape)}")
            m.mul_(self.beta1).add_(g, alpha=1.0 - self.beta1)
            v.mul_(self.beta2).addcmul_(g, g, value=1.0 - self.beta2)
            p.sub_(lr * (m / c1) / (torch.sqrt(v / c2) + self.eps))

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state_dict(self) -> dict:
        return {"step": self.step_count, "m": [t.clone() for t in self.m], "v": [t.clone() for t in self.v],
                "lr": self.lr, "betas": [self.beta1, self.beta2], "eps": self.eps}

    def load_state_dict(self, state: dict) -> None:
        if len(state["m"]) != len(self.params):
            raise ShapeMismatch("optimizer state does not match parameter list")
        self.step_count = int(state["step"])
        self.m = [t.clone().to(p.dtype) for t, p in zip(state["m"], self.params)]
        self.v = [t.clone().to(p.dtype) for t, p in zip(state["v"], self.params)]
        self.lr = state.get("lr", self.lr)
        self.beta1, self.beta2 = state.get("betas", [self.beta1, self.beta2])
        self.eps = state.get("eps", self.eps)
