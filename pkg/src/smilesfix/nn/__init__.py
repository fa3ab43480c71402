from smilesfix.nn.config import PRESETS, TransformerConfig, preset
from smilesfix.nn.model import Encoded, Seq2SeqTransformer
from smilesfix.nn.optim import Adam, clip_gradients, cosine_lr

__all__ = ["PRESETS", "TransformerConfig", "preset", "Encoded", "Seq2SeqTransformer", "Adam",
           "clip_gradients", "cosine_lr"]
