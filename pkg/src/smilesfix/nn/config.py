"""Transformer hyper-parameters and presets."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from smilesfix.errors import ConfigError
from smilesfix.smiles.vocab import MAX_CONTENT_LEN, VOCAB


@dataclass(frozen=True)
class TransformerConfig:
    n_layers: int = 2
    n_heads: int = 4
    d_model: int = 128
    d_ff: int = 256
    dropout: float = 0.1
    d_z: int = 32
    max_len: int = MAX_CONTENT_LEN
    vocab_size: int = len(VOCAB)
    property_dim: int = 0
    norm_first: bool = True
    variational: bool = False

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    @property
    def seq_width(self) -> int:
        """sos + content + eos."""
        return self.max_len + 2

    def replace(self, **kw) -> "TransformerConfig":
        d = asdict(self)
        d.update(kw)
        return TransformerConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TransformerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


PRESETS = {
    # 6 layers, 8 heads, 512 wide, 2048 feed-forward, dropout 0.25, 128-d latent, post-norm
    "paper": TransformerConfig(6, 8, 512, 2048, 0.25, 128, MAX_CONTENT_LEN, norm_first=False),
    "desk": TransformerConfig(2, 4, 128, 256, 0.1, 32, MAX_CONTENT_LEN, norm_first=True),
}


def preset(name: str, **overrides) -> TransformerConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return base.replace(**overrides) if overrides else base
