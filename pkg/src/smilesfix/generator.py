"""Property-conditioned transformer VAE: training, sampling and pair harvesting."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Iterable, Sequence

import numpy as np
import torch

from smilesfix.data.pairs import PairRecord, merge_pairs
from smilesfix.errors import ConfigError, EmptySet, NoEpochPassedGate
from smilesfix.metrics.descriptors import DESCRIPTOR_NAMES, descriptor_matrix
from smilesfix.metrics.distribution import GaussianSummary, frechet_distance, kde_1d, scott_bandwidth
from smilesfix.nn import functional as F
from smilesfix.nn.config import TransformerConfig, preset
from smilesfix.nn.decoding import autoregressive, row_gumbel
from smilesfix.nn.model import Seq2SeqTransformer
from smilesfix.nn.optim import Adam
from smilesfix.nn.training import (
    LossBreakdown, apply_gradients, build_model, check_finite, derive_seed, token_accuracy,
)
from smilesfix.smiles.chem import validate
from smilesfix.smiles.tokenizer import detokenize, pad_sequence, tokenize
from smilesfix.smiles.vocab import PAD_ID, SOS_ID

# Cheap stand-ins for the conditioning properties: weight, ring count, heteroatom count.
PROPERTY_NAMES = ("mol_weight", "ring_count", "heteroatoms")
_PROPERTY_COLUMNS = [DESCRIPTOR_NAMES.index(n) for n in PROPERTY_NAMES]


def property_values(smiles: Sequence[str]) -> np.ndarray:
    """(n, 3) raw property proxies for valid SMILES."""
    if len(smiles) == 0:
        return np.zeros((0, len(PROPERTY_NAMES)))
    return descriptor_matrix(smiles)[:, _PROPERTY_COLUMNS]


@dataclass
class PropertyScaler:
    """Standardizes properties with training-set mean and standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray) -> "PropertyScaler":
        values = np.asarray(values, dtype=np.float64)
        if values.shape[0] == 0:
            raise EmptySet("cannot fit a scaler on no molecules")
        std = values.std(axis=0)
        return cls(values.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse(self, scaled) -> np.ndarray:
        return np.asarray(scaled, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"names": list(PROPERTY_NAMES), "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PropertyScaler":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


@dataclass(frozen=True)
class GeneratorTrainConfig:
    epochs: int = 6
    batch_size: int = 32
    lr: float = 3e-4
    lr_min: float = 3e-5
    beta: float = 1.0
    beta_warmup: float = 0.1  # fraction of all steps
    clip: float = 1.0
    gate_samples: int = 3000
    gate_temperature: float = 1.0
    v_min: float = 0.5
    f_max_factor: float = 2.0
    harvest_limit: int | None = None
    harvest_temperature: float = 0.0
    decode_batch: int = 256
    dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if not 0.0 <= self.beta_warmup <= 1.0:
            raise ConfigError("beta_warmup is a fraction of the run")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorTrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown generator training keys: {sorted(unknown)}")
        return cls(**d)


def generator_config(name: str = "desk", **overrides) -> TransformerConfig:
    return preset(name, variational=True, property_dim=len(PROPERTY_NAMES), **overrides)


# ---------------------------------------------------------------- batches
def encode_rows(smiles: Sequence[str], width: int) -> np.ndarray:
    """Padded ``sos .. eos pad`` rows as an (n, width) int64 array."""
    out = np.full((len(smiles), width), PAD_ID, dtype=np.int64)
    for i, s in enumerate(smiles):
        out[i] = pad_sequence(tokenize(s, max_len=width - 2), width)
    return out


@dataclass
class GeneratorBatch:
    tokens: torch.Tensor  # (b, l) full-width encoder rows
    props: torch.Tensor | None  # (b, c) standardized
    dec_in: torch.Tensor  # (b, T) sos-shifted teacher input
    dec_out: torch.Tensor  # (b, T) targets


def make_batch(rows: np.ndarray, props: np.ndarray | None, dtype=torch.float32) -> GeneratorBatch:
    """Teacher-forcing tensors; decoder columns are cut to the longest row in the batch."""
    rows = np.asarray(rows)
    lengths = (rows != PAD_ID).sum(axis=1)
    t = int(lengths.max()) - 1
    tokens = torch.from_numpy(rows)
    p = None if props is None else torch.as_tensor(props, dtype=dtype)
    return GeneratorBatch(tokens, p, tokens[:, :t].clone(), tokens[:, 1: t + 1].clone())


def beta_at(step: int, total: int, cfg: GeneratorTrainConfig) -> float:
    warm = cfg.beta_warmup * total
    if warm <= 0:
        return cfg.beta
    return cfg.beta * min(1.0, step / warm)


def generator_loss(model: Seq2SeqTransformer, batch: GeneratorBatch, beta: float,
                   eps: torch.Tensor | None) -> tuple[torch.Tensor, LossBreakdown]:
    """Sequence cross-entropy + beta * KL + property MSE; ``eps=None`` decodes from the mean."""
    enc = model.encode(batch.tokens, batch.props)
    lat = model.latent(enc, eps)
    logits = model.decode(lat, batch.dec_in, batch.props)
    l_mol = F.cross_entropy(logits, batch.dec_out, PAD_ID, reduction="sequence")
    l_kl = F.kl_from_logvar(enc.mu, enc.logvar)
    if model.config.property_dim:
        l_prop = F.mse_property_loss(model.predict_properties(lat.memory), batch.props)
    else:
        l_prop = l_mol.new_zeros(())
    total = l_mol + beta * l_kl + l_prop
    acc = token_accuracy(logits.detach(), batch.dec_out, PAD_ID)
    parts = LossBreakdown(float(l_mol.detach()), float(l_kl.detach()), float(l_prop.detach()), float(beta),
                          float(total.detach()), acc)
    return total, parts


def train_step(model: Seq2SeqTransformer, optimizer: Adam, batch: GeneratorBatch, step: int,
               total_steps: int, cfg: GeneratorTrainConfig, seed: int) -> LossBreakdown:
    """One update. RNG (dropout, eps) is reseeded from (seed, step) so resumed runs match."""
    model.train()
    torch.manual_seed(derive_seed(seed, "step", step))
    eps = torch.randn(model.latent_shape(batch.tokens.shape[0]), dtype=model.dtype)
    loss, parts = generator_loss(model, batch, beta_at(step, total_steps, cfg), eps)
    check_finite(loss, f"generator step {step}")
    apply_gradients(model, optimizer, loss, step, total_steps, cfg.lr, cfg.lr_min, cfg.clip)
    return parts


# ---------------------------------------------------------------- decoding
def _latent_noise(seeds: Sequence[tuple], shape: tuple[int, int]) -> np.ndarray:
    return np.stack([np.random.default_rng(list(s)).standard_normal(shape) for s in seeds])


def _decode_latents(model, z: torch.Tensor, props: torch.Tensor | None, temperature: float,
                    noise_seeds: Sequence[tuple] | None) -> list[str]:
    from smilesfix.nn.model import Encoded

    noise = None
    if temperature > 0:
        noise = row_gumbel(noise_seeds, model.config.max_len + 1, model.config.vocab_size)
    ids = autoregressive(model, Encoded(z, None), props, temperature, noise)
    return [detokenize(seq) for seq in ids]


def _props_tensor(model, props, n: int) -> torch.Tensor | None:
    c = model.config.property_dim
    if c == 0:
        return None
    if props is None:
        return torch.zeros(n, c, dtype=model.dtype)
    arr = np.asarray(props, dtype=np.float64)
    if arr.ndim == 1:
        arr = np.broadcast_to(arr, (n, c))
    if arr.shape != (n, c):
        from smilesfix.errors import DimMismatch

        raise DimMismatch(f"expected properties of shape ({n}, {c}), got {arr.shape}")
    return torch.as_tensor(np.ascontiguousarray(arr), dtype=model.dtype)


@torch.no_grad()
def sample(model: Seq2SeqTransformer, n: int, properties=None, temperature: float = 1.0,
           seed: int = 0, batch_size: int = 256) -> list[str]:
    """Decode ``n`` prior draws Z ~ N(0, I) under standardized ``properties``.

    Row i draws its latent and sampling noise from (seed, i) only, so the
    output does not depend on ``batch_size``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    model.eval()
    _, width, d_z = model.latent_shape(1)
    props = _props_tensor(model, properties, n)
    out: list[str] = []
    for lo in range(0, n, batch_size):
        idx = range(lo, min(n, lo + batch_size))
        z = torch.as_tensor(_latent_noise([(seed, i, 0) for i in idx], (width, d_z)), dtype=model.dtype)
        p = None if props is None else props[lo: lo + len(idx)]
        out.extend(_decode_latents(model, z, p, temperature, [(seed, i, 1) for i in idx]))
    return out


@torch.no_grad()
def reconstruct(model: Seq2SeqTransformer, smiles: Sequence[str], properties=None, seed: int | None = None,
                temperature: float = 0.0, batch_size: int = 256) -> list[str]:
    """Encode, reparameterize and decode (greedy unless ``temperature`` > 0).

    ``seed`` None decodes from the posterior mean; otherwise row i draws its
    latent noise from (seed, i).
    """
    model.eval()
    width = model.config.seq_width
    rows = encode_rows(smiles, width)
    props = _props_tensor(model, properties, len(smiles))
    out: list[str] = []
    for lo in range(0, len(smiles), batch_size):
        hi = min(len(smiles), lo + batch_size)
        p = None if props is None else props[lo:hi]
        enc = model.encode(torch.from_numpy(rows[lo:hi]), p)
        eps = None
        if seed is not None:
            eps = torch.as_tensor(_latent_noise([(seed, i, 0) for i in range(lo, hi)], enc.mu.shape[1:]),
                                  dtype=model.dtype)
        lat = model.latent(enc, eps)
        out.extend(_decode_latents(model, lat.memory, p, temperature, [(seed or 0, i, 1) for i in range(lo, hi)]))
    return out


@torch.no_grad()
def teacher_forced_accuracy(model: Seq2SeqTransformer, smiles: Sequence[str], properties=None,
                            batch_size: int = 256) -> float:
    """Token accuracy of argmax predictions under teacher forcing, decoding from the mean."""
    model.eval()
    rows = encode_rows(smiles, model.config.seq_width)
    props = _props_tensor(model, properties, len(smiles))
    hits = total = 0
    for lo in range(0, len(smiles), batch_size):
        b = make_batch(rows[lo: lo + batch_size], None if props is None else props[lo: lo + batch_size].numpy(),
                       model.dtype)
        lat = model.latent(model.encode(b.tokens, b.props), None)
        logits = model.decode(lat, b.dec_in, b.props)
        keep = b.dec_out != PAD_ID
        hits += int(((logits.argmax(-1) == b.dec_out) & keep).sum())
        total += int(keep.sum())
    return hits / max(total, 1)


# ---------------------------------------------------------------- gating
@dataclass(frozen=True)
class EpochGateStats:
    epoch: int
    n_samples: int
    validity: float
    frechet: float
    kde_overlap: float
    v_min: float
    f_max: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def kde_overlap(a: Sequence[float], b: Sequence[float], grid_points: int = 256) -> float:
    """Overlap coefficient (integral of the pointwise minimum) of two Gaussian KDEs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        return 0.0
    ha, hb = scott_bandwidth(a), scott_bandwidth(b)
    if not (ha > 0 and hb > 0):
        return 0.0
    lo = min(a.min() - 4 * ha, b.min() - 4 * hb)
    hi = max(a.max() + 4 * ha, b.max() + 4 * hb)
    grid = np.linspace(lo, hi, grid_points)
    m = np.minimum(kde_1d(a, ha, grid), kde_1d(b, hb, grid))
    return float(min(1.0, np.trapezoid(m, grid)))


@dataclass
class GateReference:
    """Training-set descriptor summary plus the train/test distance that scales ``f_max``."""

    summary: GaussianSummary
    weights: np.ndarray
    reference_distance: float

    @classmethod
    def build(cls, train: Sequence[str], test: Sequence[str]) -> "GateReference":
        tr = descriptor_matrix(train)
        te = descriptor_matrix(test)
        s = GaussianSummary.fit(tr)
        return cls(s, tr[:, DESCRIPTOR_NAMES.index("mol_weight")],
                   frechet_distance(GaussianSummary.fit(te), s))


def gate_stats(epoch: int, samples: Sequence[str], ref: GateReference, v_min: float,
               f_max: float) -> EpochGateStats:
    valid = [s for s in samples if validate(s).valid]
    validity = len(valid) / len(samples) if samples else 0.0
    if len(valid) >= 2:
        d = descriptor_matrix(valid)
        fd = frechet_distance(GaussianSummary.fit(d), ref.summary)
        overlap = kde_overlap(d[:, DESCRIPTOR_NAMES.index("mol_weight")], ref.weights)
    else:
        fd, overlap = math.inf, 0.0
    passed = validity >= v_min and fd <= f_max
    return EpochGateStats(epoch, len(samples), validity, fd, overlap, v_min, f_max, passed)


# ---------------------------------------------------------------- harvesting
def harvest_pairs(model, smiles: Sequence[str], raw_props: np.ndarray, scaled_props: np.ndarray,
                  epoch: int, run_id: str, seed: int, temperature: float = 0.0,
                  batch_size: int = 256) -> list[PairRecord]:
    """Reconstruct each molecule once; every invalid output becomes a pair with its source."""
    outs = reconstruct(model, smiles, scaled_props, seed=derive_seed(seed, "harvest", epoch),
                       temperature=temperature, batch_size=batch_size)
    pairs = []
    for s, out, p in zip(smiles, outs, raw_props):
        if out != s and not validate(out).valid:
            pairs.append(PairRecord(out, s, epoch, run_id, 1, [float(x) for x in p]))
    return pairs


@dataclass
class EpochResult:
    epoch: int
    gate: EpochGateStats
    pairs: list[PairRecord]
    losses: list[LossBreakdown] = field(default_factory=list)


def collect_pairs(results: Iterable[EpochResult], v_min: float | None = None,
                  f_max: float | None = None) -> list[PairRecord]:
    """Deduplicated union of pairs from epochs passing the gate.

    Thresholds default to the ones recorded with each epoch; pass ``v_min=0``
    and ``f_max=math.inf`` to disable gating.
    """
    kept: list[PairRecord] = []
    any_passed = False
    for r in results:
        vm = r.gate.v_min if v_min is None else v_min
        fm = r.gate.f_max if f_max is None else f_max
        if r.gate.validity >= vm and r.gate.frechet <= fm:
            any_passed = True
            kept.extend(r.pairs)
    if not any_passed:
        raise NoEpochPassedGate("no epoch met the validity/Frechet gate; relax v_min or f_max")
    return merge_pairs(kept)


# ---------------------------------------------------------------- training loop
class GeneratorTrainer:
    """Owns the model, optimizer and data for one generator run.

    ``on_step`` and ``on_epoch`` callbacks let the caller stream CSV rows and
    checkpoints without the loop knowing about files.
    """

    def __init__(self, train: Sequence[str], cfg: GeneratorTrainConfig, model: Seq2SeqTransformer,
                 scaler: PropertyScaler, seed: int, run_id: str = "run",
                 gate_reference: GateReference | None = None,
                 optimizer: Adam | None = None, step: int = 0):
        self.train = list(train)
        self.cfg = cfg
        self.model = model
        self.scaler = scaler
        self.seed = seed
        self.run_id = run_id
        self.gate_reference = gate_reference
        self.raw_props = property_values(self.train)
        self.scaled = scaler.transform(self.raw_props)
        self.rows = encode_rows(self.train, model.config.seq_width)
        self.optimizer = optimizer or Adam(list(model.parameters()), lr=cfg.lr)
        self.step = step

    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(len(self.train) / self.cfg.batch_size)

    @property
    def total_steps(self) -> int:
        return self.steps_per_epoch * self.cfg.epochs

    def batch_indices(self, step: int) -> np.ndarray:
        epoch, k = divmod(step, self.steps_per_epoch)
        order = np.random.default_rng(derive_seed(self.seed, "order", epoch)).permutation(len(self.train))
        return order[k * self.cfg.batch_size: (k + 1) * self.cfg.batch_size]

    def run_step(self) -> LossBreakdown:
        idx = self.batch_indices(self.step)
        batch = make_batch(self.rows[idx], self.scaled[idx], self.model.dtype)
        parts = train_step(self.model, self.optimizer, batch, self.step, self.total_steps, self.cfg, self.seed)
        self.step += 1
        return parts

    def end_of_epoch(self, epoch: int) -> EpochResult:
        cfg = self.cfg
        subset = self.train if cfg.harvest_limit is None else self.train[: cfg.harvest_limit]
        n = len(subset)
        pairs = harvest_pairs(self.model, subset, self.raw_props[:n], self.scaled[:n], epoch, self.run_id,
                              self.seed, cfg.harvest_temperature, cfg.decode_batch)
        if self.gate_reference is None:
            gate = EpochGateStats(epoch, 0, math.nan, math.nan, math.nan, 0.0, math.inf, True)
        else:
            # Conditions drawn from training molecules so samples cover the property range.
            pick = np.random.default_rng(derive_seed(self.seed, "gate", epoch)).integers(
                0, len(self.train), cfg.gate_samples)
            samples = sample(self.model, cfg.gate_samples, self.scaled[pick], cfg.gate_temperature,
                             derive_seed(self.seed, "gate-sample", epoch), cfg.decode_batch)
            f_max = cfg.f_max_factor * self.gate_reference.reference_distance
            gate = gate_stats(epoch, samples, self.gate_reference, cfg.v_min, f_max)
        return EpochResult(epoch, gate, pairs)

    def fit(self, on_step: Callable | None = None, on_epoch: Callable | None = None) -> list[EpochResult]:
        results = []
        while self.step < self.total_steps:
            epoch = self.step // self.steps_per_epoch
            losses = []
            while self.step < (epoch + 1) * self.steps_per_epoch:
                parts = self.run_step()
                losses.append(parts)
                if on_step is not None:
                    on_step(self.step - 1, parts)
            res = self.end_of_epoch(epoch)
            res.losses = losses
            results.append(res)
            if on_epoch is not None:
                on_epoch(res)
        return results


def new_generator(config: TransformerConfig | None = None, seed: int = 0, dtype: str = "float32"):
    from smilesfix.nn.training import torch_dtype

    return build_model(config or generator_config(), seed, torch_dtype(dtype))


__all__ = [
    "PROPERTY_NAMES", "property_values", "PropertyScaler", "GeneratorTrainConfig", "generator_config",
    "encode_rows", "GeneratorBatch", "make_batch", "beta_at", "generator_loss", "train_step", "sample",
    "reconstruct", "teacher_forced_accuracy", "EpochGateStats", "kde_overlap", "GateReference",
    "gate_stats", "harvest_pairs", "EpochResult", "collect_pairs", "GeneratorTrainer", "new_generator",
]
