"""Masked-reconstruction pre-training, pair fine-tuning and the correction cascade."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from typing import Callable, Iterable, Sequence, TextIO

import numpy as np
import torch

from smilesfix.data.pairs import PairRecord
from smilesfix.errors import ConfigError, EmptyInput, InputTooLong, LengthExceeded
from smilesfix.metrics.report import MetricsReport, ReferenceSet, compute_report
from smilesfix.nn import functional as F
from smilesfix.nn.config import TransformerConfig, preset
from smilesfix.nn.decoding import BANNED_IDS, autoregressive, beam_search, row_gumbel
from smilesfix.nn.model import Seq2SeqTransformer
from smilesfix.nn.optim import Adam
from smilesfix.nn.training import (
    LossBreakdown, apply_gradients, build_model, check_finite, derive_seed, token_accuracy, torch_dtype,
)
from smilesfix.smiles.canonical import canonical_smiles
from smilesfix.smiles.chem import validate
from smilesfix.smiles.tokenizer import detokenize, pad_sequence, split_tokens, tokenize
from smilesfix.smiles.vocab import EOS_ID, MASK_ID, PAD_ID, SOS_ID

_NOT_CONTENT = (SOS_ID, EOS_ID, PAD_ID)


def fixer_config(name: str = "desk", **overrides) -> TransformerConfig:
    """Plain encoder-decoder, no property inputs."""
    return preset(name, variational=False, property_dim=0, **overrides)


def new_fixer(config: TransformerConfig | None = None, seed: int = 0, dtype: str = "float32"):
    return build_model(config or fixer_config(), seed, torch_dtype(dtype))


# ---------------------------------------------------------------- masking
@dataclass(frozen=True)
class MaskingPolicy:
    ratio: float = 0.10
    seed: int = 0
    strategy: str = "bernoulli"

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ConfigError(f"mask ratio must lie in [0, 1], got {self.ratio}")
        if self.strategy != "bernoulli":
            raise ConfigError("only independent Bernoulli masking is supported")


def mask_sequence(ids, ratio: float, rng: np.random.Generator) -> np.ndarray:
    """Replace each content token by ``<mask>`` independently with probability ``ratio``.

    ``ids`` may be one row or a 2-D batch; sos/eos/pad positions never change.
    """
    arr = np.array(ids.ids if hasattr(ids, "ids") else ids, dtype=np.int64)
    content = ~np.isin(arr, _NOT_CONTENT)
    hit = rng.random(arr.shape) < ratio
    arr[content & hit] = MASK_ID
    return arr


# ---------------------------------------------------------------- batches
def encode_rows(smiles: Sequence[str], width: int) -> np.ndarray:
    out = np.full((len(smiles), width), PAD_ID, dtype=np.int64)
    for i, s in enumerate(smiles):
        out[i] = pad_sequence(tokenize(s, max_len=width - 2), width)
    return out


@dataclass
class FixerBatch:
    src: torch.Tensor
    dec_in: torch.Tensor
    dec_out: torch.Tensor


def _trim(rows: np.ndarray) -> np.ndarray:
    width = int((rows != PAD_ID).sum(axis=1).max())
    return rows[:, :width]


def make_batch(src_rows: np.ndarray, tgt_rows: np.ndarray) -> FixerBatch:
    """Both sides are cut to their longest row; the pad mask covers the rest."""
    src = torch.from_numpy(np.ascontiguousarray(_trim(np.asarray(src_rows))))
    tgt = torch.from_numpy(np.ascontiguousarray(_trim(np.asarray(tgt_rows))))
    return FixerBatch(src, tgt[:, :-1].clone(), tgt[:, 1:].clone())


def fixer_loss(model: Seq2SeqTransformer, batch: FixerBatch) -> tuple[torch.Tensor, LossBreakdown]:
    """Mean token cross-entropy over non-pad target positions."""
    logits = model.decode(model.encode(batch.src), batch.dec_in)
    loss = F.cross_entropy(logits, batch.dec_out, PAD_ID)
    acc = token_accuracy(logits.detach(), batch.dec_out, PAD_ID)
    v = float(loss.detach())
    return loss, LossBreakdown(v, total=v, token_accuracy=acc)


@dataclass(frozen=True)
class FixerTrainConfig:
    epochs: int = 4
    batch_size: int = 32
    lr: float = 3e-4
    lr_min: float = 3e-5
    clip: float = 1.0
    mask_ratio: float = 0.10
    dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        MaskingPolicy(self.mask_ratio)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FixerTrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown fixer training keys: {sorted(unknown)}")
        return cls(**d)


def _update(model, optimizer, batch, step, total, cfg: FixerTrainConfig, seed: int, where: str) -> LossBreakdown:
    model.train()
    torch.manual_seed(derive_seed(seed, "step", step))
    loss, parts = fixer_loss(model, batch)
    check_finite(loss, f"{where} step {step}")
    apply_gradients(model, optimizer, loss, step, total, cfg.lr, cfg.lr_min, cfg.clip)
    return parts


def pretrain_step(model, optimizer: Adam, rows: np.ndarray, policy: MaskingPolicy, step: int, total: int,
                  cfg: FixerTrainConfig, seed: int) -> LossBreakdown:
    """Encoder sees the masked rows, decoder reconstructs the originals."""
    rng = np.random.default_rng(derive_seed(policy.seed, "mask", step))
    masked = mask_sequence(rows, policy.ratio, rng)
    return _update(model, optimizer, make_batch(masked, rows), step, total, cfg, seed, "pretrain")


def finetune_step(model, optimizer: Adam, src_rows: np.ndarray, tgt_rows: np.ndarray, step: int, total: int,
                  cfg: FixerTrainConfig, seed: int) -> LossBreakdown:
    """Encoder sees the invalid strings, decoder reconstructs their labels."""
    return _update(model, optimizer, make_batch(src_rows, tgt_rows), step, total, cfg, seed, "finetune")


def expand_pairs(pairs: Sequence[PairRecord]) -> tuple[list[str], list[str]]:
    """Sources and targets; each pair appears once (multiplicity is provenance, not weight)."""
    return [p.invalid for p in pairs], [p.valid for p in pairs]


class FixerTrainer:
    """Pre-training (``targets=None``: masked self-reconstruction) or fine-tuning on pairs."""

    def __init__(self, sources: Sequence[str], cfg: FixerTrainConfig, model: Seq2SeqTransformer, seed: int,
                 targets: Sequence[str] | None = None, optimizer: Adam | None = None, step: int = 0):
        width = model.config.seq_width
        self.cfg = cfg
        self.model = model
        self.seed = seed
        self.src = encode_rows(sources, width)
        self.tgt = None if targets is None else encode_rows(targets, width)
        if self.tgt is not None and len(self.tgt) != len(self.src):
            raise ValueError("sources and targets differ in length")
        if len(self.src) == 0:
            raise EmptyInput("no training sequences")
        self.policy = MaskingPolicy(cfg.mask_ratio, derive_seed(seed, "masking"))
        self.optimizer = optimizer or Adam(list(model.parameters()), lr=cfg.lr)
        self.step = step

    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(len(self.src) / self.cfg.batch_size)

    @property
    def total_steps(self) -> int:
        return self.steps_per_epoch * self.cfg.epochs

    def batch_indices(self, step: int) -> np.ndarray:
        epoch, k = divmod(step, self.steps_per_epoch)
        order = np.random.default_rng(derive_seed(self.seed, "order", epoch)).permutation(len(self.src))
        return order[k * self.cfg.batch_size: (k + 1) * self.cfg.batch_size]

    def run_step(self) -> LossBreakdown:
        idx = self.batch_indices(self.step)
        if self.tgt is None:
            parts = pretrain_step(self.model, self.optimizer, self.src[idx], self.policy, self.step,
                                  self.total_steps, self.cfg, self.seed)
        else:
            parts = finetune_step(self.model, self.optimizer, self.src[idx], self.tgt[idx], self.step,
                                  self.total_steps, self.cfg, self.seed)
        self.step += 1
        return parts

    def fit(self, on_step: Callable | None = None, on_epoch: Callable | None = None,
            stop: Callable | None = None) -> list[LossBreakdown]:
        """Run to the end (or until ``stop(step, parts)`` is true)."""
        losses = []
        while self.step < self.total_steps:
            parts = self.run_step()
            losses.append(parts)
            if on_step is not None:
                on_step(self.step - 1, parts)
            if on_epoch is not None and self.step % self.steps_per_epoch == 0:
                on_epoch(self.step // self.steps_per_epoch - 1)
            if stop is not None and stop(self.step - 1, parts):
                break
        return losses


@torch.no_grad()
def reconstruction_accuracy(model: Seq2SeqTransformer, sources: Sequence[str], targets: Sequence[str],
                            batch_size: int = 256) -> float:
    """Teacher-forced token accuracy (eval mode) of targets given sources."""
    model.eval()
    width = model.config.seq_width
    src, tgt = encode_rows(sources, width), encode_rows(targets, width)
    hits = total = 0
    for lo in range(0, len(src), batch_size):
        b = make_batch(src[lo: lo + batch_size], tgt[lo: lo + batch_size])
        logits = model.decode(model.encode(b.src), b.dec_in)
        keep = b.dec_out != PAD_ID
        hits += int(((logits.argmax(-1) == b.dec_out) & keep).sum())
        total += int(keep.sum())
    return hits / max(total, 1)


# ---------------------------------------------------------------- correction
@dataclass(frozen=True)
class DecodeConfig:
    """Correction cascade: greedy, then ``beam`` hypotheses, then ``samples`` draws at ``temperature``.

    ``beam=0`` and ``samples=0`` reduce it to single-shot greedy decoding.
    """

    beam: int = 5
    samples: int = 8
    temperature: float = 0.7
    seed: int = 0
    batch_size: int = 128

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DecodeConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown decode keys: {sorted(unknown)}")
        return cls(**d)


STATUSES = ("already_valid", "corrected", "failed")


@dataclass(frozen=True)
class CorrectionOutcome:
    input: str
    output: str
    status: str
    attempts: int
    mode: str  # none, greedy, beam, sample

    @property
    def edit_distance(self) -> int:
        return token_edit_distance(self.input, self.output)


def token_edit_distance(a: str, b: str) -> int:
    """Levenshtein distance over vocabulary tokens."""
    x, y = split_tokens(a), split_tokens(b)
    prev = list(range(len(y) + 1))
    for i, tx in enumerate(x, 1):
        cur = [i]
        for j, ty in enumerate(y, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (tx != ty)))
        prev = cur
    return prev[-1]


def _input_key(s: str) -> int:
    # Sampling noise depends on the input text, so results ignore batch order.
    return derive_seed("input", s)


class Fixer:
    """A trained corrector plus its decode cascade."""

    def __init__(self, model: Seq2SeqTransformer, decode: DecodeConfig = DecodeConfig()):
        self.model = model
        self.decode = decode

    def _encode(self, smiles: Sequence[str]):
        width = self.model.config.seq_width
        rows = np.full((len(smiles), width), PAD_ID, dtype=np.int64)
        for i, s in enumerate(smiles):
            try:
                rows[i] = pad_sequence(tokenize(s, max_len=self.model.config.max_len), width)
            except LengthExceeded as exc:
                raise InputTooLong(f"{exc.length} tokens exceeds the fixer limit of {exc.limit}: {s!r}") from None
        return self.model.encode(torch.from_numpy(np.ascontiguousarray(_trim(rows))))

    @torch.no_grad()
    def fix_many(self, smiles: Sequence[str]) -> list[CorrectionOutcome]:
        """Run the cascade over a list; invalid inputs are decoded in batches."""
        self.model.eval()
        dc = self.decode
        smiles = list(smiles)
        outcomes: list[CorrectionOutcome | None] = [None] * len(smiles)
        todo = []
        for i, s in enumerate(smiles):
            if validate(s).valid:
                outcomes[i] = CorrectionOutcome(s, s, "already_valid", 0, "none")
            else:
                todo.append(i)
        for lo in range(0, len(todo), dc.batch_size):
            chunk = todo[lo: lo + dc.batch_size]
            for i, out in zip(chunk, self._cascade([smiles[i] for i in chunk])):
                outcomes[i] = out
        return outcomes

    def fix(self, smiles: str) -> CorrectionOutcome:
        return self.fix_many([smiles])[0]

    def _cascade(self, inputs: list[str]) -> list[CorrectionOutcome]:
        dc = self.decode
        model = self.model
        enc = self._encode(inputs)
        greedy = [detokenize(ids) for ids in autoregressive(model, enc)]
        result: dict[int, CorrectionOutcome] = {}
        for i, g in enumerate(greedy):
            if validate(g).valid:
                result[i] = CorrectionOutcome(inputs[i], g, "corrected", 1, "greedy")
        pending = [i for i in range(len(inputs)) if i not in result]
        if pending and dc.beam > 0:
            sub = _select(enc, pending)
            for i, hyps in zip(pending, beam_search(model, sub, beam=dc.beam)):
                for rank, (ids, _) in enumerate(hyps, 1):
                    cand = detokenize(ids)
                    if validate(cand).valid:
                        result[i] = CorrectionOutcome(inputs[i], cand, "corrected", 1 + rank, "beam")
                        break
            pending = [i for i in pending if i not in result]
        used_beam = min(dc.beam, model.config.vocab_size - len(BANNED_IDS)) if dc.beam > 0 else 0
        if pending and dc.samples > 0:
            # every pending row repeated once per attempt
            rows = [i for i in pending for _ in range(dc.samples)]
            sub = _select(enc, rows)
            seeds = [(dc.seed, _input_key(inputs[i]), a) for i in pending for a in range(dc.samples)]
            noise = row_gumbel(seeds, model.config.max_len + 1, model.config.vocab_size)
            outs = autoregressive(model, sub, None, dc.temperature, noise)
            for n, i in enumerate(pending):
                for a in range(dc.samples):
                    cand = detokenize(outs[n * dc.samples + a])
                    if validate(cand).valid:
                        result[i] = CorrectionOutcome(inputs[i], cand, "corrected", 1 + used_beam + a + 1, "sample")
                        break
        total = 1 + used_beam + dc.samples
        return [
            result.get(i) or CorrectionOutcome(inputs[i], greedy[i], "failed", total, "greedy")
            for i in range(len(inputs))
        ]


def _select(enc, index: Sequence[int]):
    from smilesfix.nn.model import Encoded

    idx = torch.as_tensor(list(index), dtype=torch.long)
    return Encoded(enc.memory.index_select(0, idx), enc.memory_pad.index_select(0, idx))


OUTCOME_FIELDS = ("input", "status", "output", "attempts", "edit_distance")


def write_outcomes_csv(outcomes: Iterable[CorrectionOutcome], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(OUTCOME_FIELDS)
    for o in outcomes:
        w.writerow([o.input, o.status, o.output, o.attempts, o.edit_distance])


def read_outcomes_csv(fh: TextIO) -> list[dict]:
    rows = list(csv.DictReader(fh))
    for r in rows:
        r["attempts"] = int(r["attempts"])
        r["edit_distance"] = int(r["edit_distance"])
    return rows


@dataclass
class BatchCorrection:
    before: MetricsReport
    after: MetricsReport
    outcomes: list[CorrectionOutcome]
    mean_edit_distance: float | None


def correct_batch(fixer: Fixer, samples: Sequence[str], reference: ReferenceSet | Sequence[str] | None = None,
                  scaffold_reference: ReferenceSet | Sequence[str] | None = None,
                  k: int | None = None) -> BatchCorrection:
    """Metrics before and after correcting every invalid sample."""
    samples = list(samples)
    if not samples:
        raise EmptyInput("no samples to correct")
    if reference is not None and not isinstance(reference, ReferenceSet):
        reference = ReferenceSet(reference)
    if scaffold_reference is not None and not isinstance(scaffold_reference, ReferenceSet):
        scaffold_reference = ReferenceSet(scaffold_reference)
    outcomes = fixer.fix_many(samples)
    before = compute_report(samples, reference, scaffold_reference, k)
    after = compute_report([o.output for o in outcomes], reference, scaffold_reference, k)
    n_invalid = sum(o.status != "already_valid" for o in outcomes)
    n_fixed = sum(o.status == "corrected" for o in outcomes)
    for rep in (before, after):
        rep.n_previously_invalid = n_invalid
        rep.n_corrected = n_fixed
        rep.correction_rate = n_fixed / n_invalid if n_invalid else None
    dists = [o.edit_distance for o in outcomes if o.status == "corrected"]
    return BatchCorrection(before, after, outcomes, float(np.mean(dists)) if dists else None)


# ---------------------------------------------------------------- ablation
ABLATION_FIELDS = ("mask_ratio", "validity", "precision", "recall", "f1")


@dataclass(frozen=True)
class AblationRow:
    mask_ratio: float
    validity: float
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return asdict(self)


def retrieval_scores(ratio: float, outcomes: Sequence[CorrectionOutcome], labels: Sequence[str]) -> AblationRow:
    """Percentages. A positive is a corrected output whose canonical form equals the label's.

    precision = positives / corrected outputs, recall = positives / all inputs.
    """
    n = len(outcomes)
    if n == 0:
        raise EmptyInput("empty evaluation set")
    corrected = [o for o in outcomes if o.status == "corrected"]
    hits = sum(
        1 for o, lab in zip(outcomes, labels)
        if o.status == "corrected" and canonical_smiles(o.output) == canonical_smiles(lab)
    )
    validity = 100.0 * len(corrected) / n
    precision = 100.0 * hits / len(corrected) if corrected else 0.0
    recall = 100.0 * hits / n
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return AblationRow(ratio, validity, precision, recall, f1)


def masking_ablation(ratios: Sequence[float], train: Sequence[str], pairs: Sequence[PairRecord],
                     eval_set: Sequence[tuple[str, str]], model_config: TransformerConfig,
                     pretrain_cfg: FixerTrainConfig, finetune_cfg: FixerTrainConfig, seed: int,
                     decode: DecodeConfig = DecodeConfig(), done: dict | None = None,
                     on_row: Callable | None = None) -> list[AblationRow]:
    """One pre-train + identical fine-tune per ratio, scored on ``eval_set`` (invalid, label).

    Rows already in ``done`` (keyed by ratio) are reused, which makes the sweep resumable.
    """
    done = dict(done or {})
    rows = []
    sources, targets = expand_pairs(pairs)
    inputs = [s for s, _ in eval_set]
    labels = [lab for _, lab in eval_set]
    for r in ratios:
        if r in done:
            rows.append(done[r])
            continue
        model = build_model(model_config, derive_seed(seed, "ablation-model"), torch_dtype(pretrain_cfg.dtype))
        pre = FixerTrainer(train, FixerTrainConfig(**{**pretrain_cfg.to_dict(), "mask_ratio": r}), model,
                           derive_seed(seed, "ablation-pretrain"))
        pre.fit()
        fine = FixerTrainer(sources, finetune_cfg, model, derive_seed(seed, "ablation-finetune"), targets)
        fine.fit()
        row = retrieval_scores(r, Fixer(model, decode).fix_many(inputs), labels)
        rows.append(row)
        if on_row is not None:
            on_row(row)
    return rows


__all__ = [
    "fixer_config", "new_fixer", "MaskingPolicy", "mask_sequence", "encode_rows", "FixerBatch", "make_batch",
    "fixer_loss", "FixerTrainConfig", "pretrain_step", "finetune_step", "expand_pairs", "FixerTrainer",
    "reconstruction_accuracy", "DecodeConfig", "STATUSES", "CorrectionOutcome", "token_edit_distance", "Fixer",
    "OUTCOME_FIELDS", "write_outcomes_csv", "read_outcomes_csv", "BatchCorrection", "correct_batch",
    "ABLATION_FIELDS", "AblationRow", "retrieval_scores", "masking_ablation",
]
