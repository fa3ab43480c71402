"""Encoder-decoder transformer shared by the generator (variational) and the fixer."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from smilesfix.nn import functional as F
from smilesfix.nn.config import TransformerConfig
from smilesfix.nn.layers import DecoderLayer, EncoderLayer, LayerNorm, Linear, PropertyEmbedding, TokenEmbedding
from smilesfix.smiles.vocab import PAD_ID


@dataclass
class Encoded:
    """Encoder output. ``memory`` feeds cross-attention (Z when variational)."""

    memory: torch.Tensor
    memory_pad: torch.Tensor | None  # (b, S) bool, True = ignore
    mu: torch.Tensor | None = None
    logvar: torch.Tensor | None = None

    @property
    def sigma(self):
        return None if self.logvar is None else torch.exp(0.5 * self.logvar)


@dataclass
class DecodeState:
    """Incremental decoding state: per-layer self-attention caches plus cross-attention heads."""

    caches: list[dict]
    memory_kv: list[tuple]
    memory_mask: torch.Tensor | None
    position: int
    props: torch.Tensor | None = None
    extra: dict = field(default_factory=dict)

    def select(self, index: torch.Tensor) -> "DecodeState":
        caches = [{k: v.index_select(0, index) for k, v in c.items()} for c in self.caches]
        kv = [(k.index_select(0, index), v.index_select(0, index)) for k, v in self.memory_kv]
        mm = None if self.memory_mask is None else self.memory_mask.index_select(0, index)
        pr = None if self.props is None else self.props.index_select(0, index)
        return DecodeState(caches, kv, mm, self.position, pr)


class Seq2SeqTransformer(nn.Module):
    """Token (+ property) encoder, causal decoder with cross-attention.

    Encoder input is the padded token row followed by ``c`` property slots;
    decoder input is the ``c`` property slots followed by the shifted tokens,
    so every token position can attend to the conditioning. Sinusoidal
    positions are added over the concatenated sequence in both stacks.
    """

    def __init__(self, config: TransformerConfig):
        super().__init__()
        cfg = self.config = config
        d = cfg.d_model
        self.tokens = TokenEmbedding(cfg.vocab_size, d)
        self.properties = PropertyEmbedding(cfg.property_dim, d) if cfg.property_dim else None
        self.encoder = nn.ModuleList(
            EncoderLayer(d, cfg.n_heads, cfg.d_ff, cfg.dropout, cfg.norm_first) for _ in range(cfg.n_layers)
        )
        d_mem = cfg.d_z if cfg.variational else d
        self.decoder = nn.ModuleList(
            DecoderLayer(d, cfg.n_heads, cfg.d_ff, cfg.dropout, d_mem, cfg.norm_first) for _ in range(cfg.n_layers)
        )
        self.enc_norm = LayerNorm(d) if cfg.norm_first else None
        self.dec_norm = LayerNorm(d) if cfg.norm_first else None
        if cfg.variational:
            self.mu_head = Linear(d, cfg.d_z)
            self.logvar_head = Linear(d, cfg.d_z)
            self.property_head = Linear(cfg.d_z, cfg.property_dim) if cfg.property_dim else None
        self.out = Linear(d, cfg.vocab_size)
        self.register_buffer(
            "positions", F.sinusoidal_positions(cfg.seq_width + cfg.property_dim + 1, d), persistent=False
        )

    # -------------------------------------------------------------- helpers
    @property
    def dtype(self):
        return self.out.weight.dtype

    def _props(self, props, batch: int):
        c = self.config.property_dim
        if c == 0:
            return None
        if props is None:
            props = torch.zeros(batch, c, dtype=self.dtype)
        return self.properties(props.to(self.dtype))

    def _drop(self, x):
        return F.dropout(x, self.config.dropout, self.training)

    # -------------------------------------------------------------- encoder
    def encode(self, ids: torch.Tensor, props: torch.Tensor | None = None) -> Encoded:
        b, length = ids.shape
        parts = [self.tokens(ids)]
        p = self._props(props, b)
        if p is not None:
            parts.append(p)
        x = torch.cat(parts, dim=1)
        x = self._drop(x + self.positions[: x.shape[1]])
        pad = ids == PAD_ID
        if p is not None:
            pad = torch.cat([pad, torch.zeros(b, p.shape[1], dtype=torch.bool)], dim=1)
        mask = F.padding_mask(pad, self.dtype)
        for layer in self.encoder:
            x = layer(x, mask)
        if self.enc_norm is not None:
            x = self.enc_norm(x)
        if not self.config.variational:
            return Encoded(x, pad)
        return Encoded(None, None, self.mu_head(x), self.logvar_head(x))

    def latent(self, enc: Encoded, eps: torch.Tensor | None) -> Encoded:
        """Z = mu + sigma * eps (eps=None means eps=0). Cross-attention sees every latent position."""
        z = enc.mu if eps is None else F.reparameterize(enc.mu, enc.sigma, eps)
        return Encoded(z, None, enc.mu, enc.logvar)

    def predict_properties(self, z: torch.Tensor) -> torch.Tensor:
        return self.property_head(z.mean(dim=1))

    def latent_shape(self, batch: int) -> tuple[int, int, int]:
        return batch, self.config.seq_width + self.config.property_dim, self.config.d_z

    # -------------------------------------------------------------- decoder
    def _memory_kv(self, memory):
        return [layer.cross_attn.project_kv(memory) for layer in self.decoder]

    def _dec_input(self, dec_ids, props, start: int):
        b = dec_ids.shape[0]
        parts = []
        p = self._props(props, b) if start == 0 else None
        if p is not None:
            parts.append(p)
        parts.append(self.tokens(dec_ids))
        x = torch.cat(parts, dim=1)
        return self._drop(x + self.positions[start: start + x.shape[1]])

    def _run_decoder(self, x, memory_kv, self_mask, memory_mask, caches=None):
        for n, layer in enumerate(self.decoder):
            x = layer(x, memory_kv[n], self_mask, memory_mask, None if caches is None else caches[n])
        if self.dec_norm is not None:
            x = self.dec_norm(x)
        return x

    def decode(self, enc: Encoded, dec_ids: torch.Tensor, props: torch.Tensor | None = None) -> torch.Tensor:
        """Teacher-forced logits (b, T, V) for the T decoder token positions."""
        c = self.config.property_dim
        x = self._dec_input(dec_ids, props, 0)
        mask = F.causal_mask(x.shape[1], self.dtype)
        mem_mask = None if enc.memory_pad is None else F.padding_mask(enc.memory_pad, self.dtype)
        h = self._run_decoder(x, self._memory_kv(enc.memory), mask, mem_mask)
        return self.out(h[:, c:])

    def start(self, enc: Encoded, sos_ids: torch.Tensor, props: torch.Tensor | None = None):
        """Feed property slots and the start token; returns (logits for next token, state)."""
        mem_mask = None if enc.memory_pad is None else F.padding_mask(enc.memory_pad, self.dtype)
        state = DecodeState([{} for _ in self.decoder], self._memory_kv(enc.memory), mem_mask, 0, props)
        x = self._dec_input(sos_ids[:, None], props, 0)
        mask = F.causal_mask(x.shape[1], self.dtype)
        h = self._run_decoder(x, state.memory_kv, mask, mem_mask, state.caches)
        state.position = x.shape[1]
        return self.out(h[:, -1]), state

    def step(self, state: DecodeState, ids: torch.Tensor):
        """Advance one token; the cached keys make this exact w.r.t. :meth:`decode`."""
        x = self._dec_input(ids[:, None], None, state.position)
        h = self._run_decoder(x, state.memory_kv, None, state.memory_mask, state.caches)
        state.position += 1
        return self.out(h[:, -1]), state
