"""Transformer math on torch tensors: attention, masks, encodings and losses.

Only elementwise/matmul/reduction primitives come from torch; everything
composite is spelled out here so it can be checked against finite differences.
"""

from __future__ import annotations

import math

import torch

from smilesfix.errors import DimMismatch, IdOutOfRange, NonPositiveSigma, ShapeMismatch

NEG_INF = float("-inf")


def linear(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor | None = None) -> torch.Tensor:
    y = x @ weight.transpose(0, 1)
    return y if bias is None else y + bias


def layer_norm(x: torch.Tensor, gain: torch.Tensor, bias: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    mu = x.mean(dim=-1, keepdim=True)
    var = ((x - mu) ** 2).mean(dim=-1, keepdim=True)
    return (x - mu) / torch.sqrt(var + eps) * gain + bias


def softmax(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    m = x.amax(dim=dim, keepdim=True).detach()
    m = torch.where(torch.isfinite(m), m, torch.zeros_like(m))
    e = torch.exp(x - m)
    return e / e.sum(dim=dim, keepdim=True)


def log_softmax(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    m = x.amax(dim=dim, keepdim=True).detach()
    return x - m - torch.log(torch.exp(x - m).sum(dim=dim, keepdim=True))


def dropout(x: torch.Tensor, p: float, training: bool, generator: torch.Generator | None = None) -> torch.Tensor:
    if not training or p == 0.0:
        return x
    keep = (torch.rand(x.shape, generator=generator, dtype=x.dtype, device=x.device) >= p).to(x.dtype)
    return x * keep / (1.0 - p)


def causal_mask(length: int, dtype=torch.float64) -> torch.Tensor:
    """Additive mask: 0 where key position <= query position, -inf after."""
    future = torch.triu(torch.ones(length, length, dtype=torch.bool), diagonal=1)
    return torch.zeros(length, length, dtype=dtype).masked_fill(future, NEG_INF)


def padding_mask(key_pad: torch.Tensor, dtype=torch.float64) -> torch.Tensor:
    """(b, k) bool pad flags -> additive (b, 1, 1, k) mask."""
    return torch.zeros(key_pad.shape, dtype=dtype).masked_fill(key_pad, NEG_INF)[:, None, None, :]


def scaled_dot_product_attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor,
                                 mask: torch.Tensor | None = None):
    """softmax(q k^T / sqrt(d) + mask) v over the last two dims.

    Returns (output, attention weights).
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeMismatch(f"q {tuple(q.shape)}, k {tuple(k.shape)}, v {tuple(v.shape)}")
    scores = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])
    if mask is not None:
        scores = scores + mask
    w = softmax(scores, dim=-1)
    return w @ v, w


def sinusoidal_positions(length: int, d_model: int, dtype=torch.float64) -> torch.Tensor:
    pos = torch.arange(length, dtype=torch.float64)[:, None]
    i = torch.arange(0, d_model, 2, dtype=torch.float64)
    angle = pos / torch.pow(10000.0, i / d_model)
    pe = torch.zeros(length, d_model, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(angle)
    pe[:, 1::2] = torch.cos(angle[:, : d_model // 2])
    return pe.to(dtype)


def embed_tokens(ids: torch.Tensor, table: torch.Tensor) -> torch.Tensor:
    if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= table.shape[0]):
        raise IdOutOfRange(f"token ids must lie in [0, {table.shape[0]})")
    return table[ids]


def embed_properties(props: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """(b, c) scalars -> (b, c, d): property j maps through its own affine row."""
    if props.shape[-1] != weight.shape[0]:
        raise DimMismatch(f"expected {weight.shape[0]} properties, got {props.shape[-1]}")
    return props[..., None] * weight + bias


def reparameterize(mu: torch.Tensor, sigma: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
    if bool((sigma <= 0).any()):
        raise NonPositiveSigma("sigma must be strictly positive")
    return mu + sigma * eps


def kl_loss(mu: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
    """0.5 * sum(mu^2 + sigma^2 - 1 - ln sigma^2), summed per sample, averaged over the batch."""
    if bool((sigma <= 0).any()):
        raise NonPositiveSigma("sigma must be strictly positive")
    per = 0.5 * (mu ** 2 + sigma ** 2 - 1.0 - torch.log(sigma ** 2))
    return per.reshape(per.shape[0], -1).sum(dim=1).mean()


def kl_from_logvar(mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """Same quantity with sigma^2 = exp(logvar); avoids the log of a square."""
    per = 0.5 * (mu ** 2 + torch.exp(logvar) - 1.0 - logvar)
    return per.reshape(per.shape[0], -1).sum(dim=1).mean()


def cross_entropy(logits: torch.Tensor, targets: torch.Tensor, ignore_index: int | None = None,
                  reduction: str = "mean") -> torch.Tensor:
    """Token negative log-likelihood; positions equal to ``ignore_index`` are excluded.

    reduction: ``mean`` over counted tokens, or ``sequence`` (sum per row, mean over rows).
    """
    if targets.numel() and (int(targets.min()) < 0 or int(targets.max()) >= logits.shape[-1]):
        raise IdOutOfRange("target id outside the vocabulary")
    nll = -log_softmax(logits, dim=-1).gather(-1, targets[..., None])[..., 0]
    keep = torch.ones_like(nll) if ignore_index is None else (targets != ignore_index).to(nll.dtype)
    nll = nll * keep
    if reduction == "mean":
        return nll.sum() / keep.sum().clamp_min(1.0)
    if reduction == "sequence":
        return nll.reshape(nll.shape[0], -1).sum(dim=1).mean()
    raise ValueError(f"unknown reduction {reduction!r}")


def mse_property_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if pred.shape != target.shape:
        raise DimMismatch(f"{tuple(pred.shape)} vs {tuple(target.shape)}")
    if pred.numel() == 0:
        return pred.sum() * 0.0
    return ((pred - target) ** 2).mean()
