"""Pieces shared by the generator and fixer training loops."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass

import torch

from smilesfix.errors import CheckpointError, NonFiniteLoss
from smilesfix.nn.checkpoint import load_checkpoint, save_checkpoint
from smilesfix.nn.config import TransformerConfig
from smilesfix.nn.model import Seq2SeqTransformer
from smilesfix.nn.optim import Adam, clip_gradients, cosine_lr


@dataclass(frozen=True)
class LossBreakdown:
    """One step's losses; ``total = l_mol + beta * l_kl + l_prop``."""

    l_mol: float
    l_kl: float = 0.0
    l_prop: float = 0.0
    beta: float = 0.0
    total: float = 0.0
    token_accuracy: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


def derive_seed(*parts) -> int:
    """63-bit seed from a hash of ``parts`` (ints and strings)."""
    raw = json.dumps([p if isinstance(p, (int, str)) else str(p) for p in parts]).encode()
    return int.from_bytes(hashlib.sha256(raw).digest()[:8], "little") & ((1 << 63) - 1)


def torch_dtype(name: str) -> torch.dtype:
    try:
        return {"float32": torch.float32, "float64": torch.float64}[name]
    except KeyError:
        raise ValueError(f"dtype must be float32 or float64, got {name!r}") from None


def build_model(config: TransformerConfig, seed: int, dtype=torch.float32) -> Seq2SeqTransformer:
    torch.manual_seed(derive_seed(seed, "init"))
    with torch.no_grad():
        model = Seq2SeqTransformer(config)
    return model.to(dtype)


def token_accuracy(logits: torch.Tensor, targets: torch.Tensor, ignore_index: int) -> float:
    keep = targets != ignore_index
    hits = (logits.argmax(dim=-1) == targets) & keep
    return float(hits.sum()) / max(int(keep.sum()), 1)


def check_finite(loss: torch.Tensor, where: str) -> None:
    if not math.isfinite(float(loss.detach())):
        raise NonFiniteLoss(f"non-finite loss ({float(loss.detach())}) at {where}")


def apply_gradients(model, optimizer: Adam, loss: torch.Tensor, step: int, total_steps: int,
                    lr_max: float, lr_min: float, clip: float | None) -> float:
    """Backward, clip, cosine-scheduled Adam update. Returns the pre-clip gradient norm."""
    params = optimizer.params
    optimizer.zero_grad()
    loss.backward()
    grads = [p.grad for p in params]
    norm = clip_gradients(grads, clip) if clip else float("nan")
    lr = cosine_lr(min(step, total_steps), total_steps, lr_max, lr_min)
    optimizer.step(grads, lr=lr)
    return norm


def model_tensors(model) -> dict[str, torch.Tensor]:
    return {n: p.detach() for n, p in model.named_parameters()}


def save_model(path, kind: str, model: Seq2SeqTransformer, optimizer: Adam | None = None,
               meta: dict | None = None) -> None:
    save_checkpoint(path, kind, model.config.to_dict(), model_tensors(model), meta,
                    None if optimizer is None else optimizer.state_dict())


def load_model(path, kind: str | None = None, dtype=None):
    """Rebuild a model (and its optimizer state, if stored) from a checkpoint.

    Returns (model, optimizer or None, meta).
    """
    ck = load_checkpoint(path)
    if kind is not None and ck["kind"] != kind:
        raise CheckpointError(f"{path}: expected a {kind} checkpoint, found {ck['kind']}")
    config = TransformerConfig.from_dict(ck["config"])
    with torch.no_grad():
        model = Seq2SeqTransformer(config)
    tensors = ck["tensors"]
    stored_dtype = next(iter(tensors.values())).dtype if tensors else torch.float32
    model = model.to(dtype or stored_dtype)
    names = [n for n, _ in model.named_parameters()]
    if set(names) != set(tensors):
        raise CheckpointError(f"{path}: parameter names do not match the model")
    with torch.no_grad():
        for n, p in model.named_parameters():
            t = tensors[n]
            if tuple(t.shape) != tuple(p.shape):
                raise CheckpointError(f"{path}: shape mismatch for {n}")
            p.copy_(t.to(p.dtype))
    optimizer = None
    if ck["optimizer"] is not None:
        optimizer = Adam(list(model.parameters()))
        opt = dict(ck["optimizer"])
        if opt["params"] != names:
            raise CheckpointError(f"{path}: optimizer state does not match parameters")
        optimizer.load_state_dict(opt)
    return model, optimizer, ck["meta"]
