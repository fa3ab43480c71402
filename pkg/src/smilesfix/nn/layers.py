"""Parameterised building blocks. ``torch.nn.Module`` is used only as a parameter container."""

from __future__ import annotations

import math

import torch
from torch import nn

from smilesfix.nn import functional as F


def uniform_fan_in(shape, fan_in: int, generator: torch.Generator | None = None) -> torch.Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return (torch.rand(shape, generator=generator, dtype=torch.float64) * 2.0 - 1.0) * bound


class Linear(nn.Module):
    def __init__(self, d_in: int, d_out: int, bias: bool = True):
        super().__init__()
        self.weight = nn.Parameter(uniform_fan_in((d_out, d_in), d_in))
        self.bias = nn.Parameter(uniform_fan_in((d_out,), d_in)) if bias else None

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class LayerNorm(nn.Module):
    def __init__(self, d: int, eps: float = 1e-5):
        super().__init__()
        self.gain = nn.Parameter(torch.ones(d, dtype=torch.float64))
        self.bias = nn.Parameter(torch.zeros(d, dtype=torch.float64))
        self.eps = eps

    def forward(self, x):
        return F.layer_norm(x, self.gain, self.bias, self.eps)


class TokenEmbedding(nn.Module):
    """Lookup table; a lookup is a one-hot linear map, so fan-in is 1."""

    def __init__(self, vocab_size: int, d_model: int):
        super().__init__()
        self.table = nn.Parameter(uniform_fan_in((vocab_size, d_model), 1))

    def forward(self, ids):
        return F.embed_tokens(ids, self.table)


class PropertyEmbedding(nn.Module):
    """One affine map R -> R^d per property."""

    def __init__(self, n_props: int, d_model: int):
        super().__init__()
        self.weight = nn.Parameter(uniform_fan_in((n_props, d_model), 1))
        self.bias = nn.Parameter(uniform_fan_in((n_props, d_model), 1))

    def forward(self, props):
        return F.embed_properties(props, self.weight, self.bias)


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, d_kv_in: int | None = None, dropout: float = 0.0):
        super().__init__()
        d_kv_in = d_model if d_kv_in is None else d_kv_in
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q_proj = Linear(d_model, d_model)
        self.k_proj = Linear(d_kv_in, d_model)
        self.v_proj = Linear(d_kv_in, d_model)
        self.out_proj = Linear(d_model, d_model)
        self.p_drop = dropout

    def _split(self, x):
        b, t, _ = x.shape
        return x.reshape(b, t, self.n_heads, self.d_head).transpose(1, 2)

    def project_kv(self, x_kv):
        return self._split(self.k_proj(x_kv)), self._split(self.v_proj(x_kv))

    def forward(self, x_q, x_kv=None, mask=None, kv=None, cache: dict | None = None):
        """Attend from ``x_q`` to ``x_kv``.

        ``kv`` supplies precomputed (k, v) heads. With ``cache`` (self-attention
        only) new keys/values are appended to the cached ones.
        """
        q = self._split(self.q_proj(x_q))
        if kv is None:
            k, v = self.project_kv(x_q if x_kv is None else x_kv)
        else:
            k, v = kv
        if cache is not None:
            if "k" in cache:
                k = torch.cat([cache["k"], k], dim=2)
                v = torch.cat([cache["v"], v], dim=2)
            cache["k"], cache["v"] = k, v
        out, w = F.scaled_dot_product_attention(q, k, v, mask)
        self.last_weights = w.detach()
        b, h, t, dh = out.shape
        out = out.transpose(1, 2).reshape(b, t, h * dh)
        return F.dropout(self.out_proj(out), self.p_drop, self.training)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int, dropout: float):
        super().__init__()
        self.fc1 = Linear(d_model, d_ff)
        self.fc2 = Linear(d_ff, d_model)
        self.p_drop = dropout

    def forward(self, x):
        h = torch.relu(self.fc1(x))
        return F.dropout(self.fc2(F.dropout(h, self.p_drop, self.training)), self.p_drop, self.training)


class EncoderLayer(nn.Module):
    def __init__(self, d_model, n_heads, d_ff, dropout, norm_first=True):
        super().__init__()
        self.attn = MultiHeadAttention(d_model, n_heads, dropout=dropout)
        self.ff = FeedForward(d_model, d_ff, dropout)
        self.norm1, self.norm2 = LayerNorm(d_model), LayerNorm(d_model)
        self.norm_first = norm_first

    def forward(self, x, mask=None):
        if self.norm_first:
            x = x + self.attn(self.norm1(x), mask=mask)
            return x + self.ff(self.norm2(x))
        x = self.norm1(x + self.attn(x, mask=mask))
        return self.norm2(x + self.ff(x))


class DecoderLayer(nn.Module):
    def __init__(self, d_model, n_heads, d_ff, dropout, d_memory, norm_first=True):
        super().__init__()
        self.self_attn = MultiHeadAttention(d_model, n_heads, dropout=dropout)
        self.cross_attn = MultiHeadAttention(d_model, n_heads, d_kv_in=d_memory, dropout=dropout)
        self.ff = FeedForward(d_model, d_ff, dropout)
        self.norm1, self.norm2, self.norm3 = LayerNorm(d_model), LayerNorm(d_model), LayerNorm(d_model)
        self.norm_first = norm_first

    def forward(self, x, memory_kv, self_mask=None, memory_mask=None, cache=None):
        """``memory_kv`` are the cross-attention (k, v) heads, computed once per memory."""
        if self.norm_first:
            x = x + self.self_attn(self.norm1(x), mask=self_mask, cache=cache)
            x = x + self.cross_attn(self.norm2(x), kv=memory_kv, mask=memory_mask)
            return x + self.ff(self.norm3(x))
        x = self.norm1(x + self.self_attn(x, mask=self_mask, cache=cache))
        x = self.norm2(x + self.cross_attn(x, kv=memory_kv, mask=memory_mask))
        return self.norm3(x + self.ff(x))
