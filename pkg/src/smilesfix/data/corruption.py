"""Synthetic token-level corruption for controlled evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from smilesfix.errors import CorruptionExhausted
from smilesfix.smiles.chem import validate
from smilesfix.smiles.tokenizer import split_tokens
from smilesfix.smiles.vocab import MAX_CONTENT_LEN, RING_TOKENS, VOCAB

CASE_SWAP = {"C": "c", "c": "C", "N": "n", "n": "N", "O": "o", "o": "O", "S": "s", "s": "S"}
EDIT_KINDS = ("substitute", "delete", "insert", "ring_flip", "case_flip")


@dataclass(frozen=True)
class CorruptionSpec:
    min_edits: int = 1
    max_edits: int = 3
    weights: dict = field(default_factory=lambda: {
        "substitute": 0.3, "delete": 0.25, "insert": 0.25, "ring_flip": 0.1, "case_flip": 0.1,
    })
    max_tries: int = 20

    def __post_init__(self):
        if self.min_edits < 1 or self.max_edits < self.min_edits:
            raise ValueError("need 1 <= min_edits <= max_edits")
        if set(self.weights) - set(EDIT_KINDS):
            raise ValueError(f"unknown edit kinds {set(self.weights) - set(EDIT_KINDS)}")


@dataclass(frozen=True)
class Edit:
    kind: str
    position: int
    old: str | None
    new: str | None


_ALPHABET = list(VOCAB.content_tokens)


def _apply_one(tokens: list[str], kind: str, rng: np.random.Generator) -> Edit | None:
    if kind == "substitute" and tokens:
        p = int(rng.integers(len(tokens)))
        new = _ALPHABET[int(rng.integers(len(_ALPHABET)))]
        if new == tokens[p]:
            return None
        old, tokens[p] = tokens[p], new
        return Edit(kind, p, old, new)
    if kind == "delete" and len(tokens) > 1:
        p = int(rng.integers(len(tokens)))
        return Edit(kind, p, tokens.pop(p), None)
    if kind == "insert" and len(tokens) < MAX_CONTENT_LEN:
        p = int(rng.integers(len(tokens) + 1))
        new = _ALPHABET[int(rng.integers(len(_ALPHABET)))]
        tokens.insert(p, new)
        return Edit(kind, p, None, new)
    if kind == "ring_flip":
        spots = [i for i, t in enumerate(tokens) if t in RING_TOKENS]
        if not spots:
            return None
        p = spots[int(rng.integers(len(spots)))]
        choices = [d for d in RING_TOKENS if d != tokens[p]]
        new = choices[int(rng.integers(len(choices)))]
        old, tokens[p] = tokens[p], new
        return Edit(kind, p, old, new)
    if kind == "case_flip":
        spots = [i for i, t in enumerate(tokens) if t in CASE_SWAP]
        if not spots:
            return None
        p = spots[int(rng.integers(len(spots)))]
        old, tokens[p] = tokens[p], CASE_SWAP[tokens[p]]
        return Edit(kind, p, old, tokens[p])
    return None


def corrupt(smiles: str, spec: CorruptionSpec = CorruptionSpec(), rng: np.random.Generator | None = None):
    """Apply 1..k random token edits until the string fails validation.

    Returns (invalid string, edit trace).

    Raises:
        ValueError: the input is not valid to begin with.
        CorruptionExhausted: every one of ``spec.max_tries`` attempts stayed valid.
    """
    if not validate(smiles).valid:
        raise ValueError(f"corrupt expects a valid molecule, got {smiles!r}")
    rng = np.random.default_rng() if rng is None else rng
    kinds = list(spec.weights)
    w = np.array([spec.weights[k] for k in kinds], dtype=float)
    w /= w.sum()
    base = split_tokens(smiles)
    for _ in range(spec.max_tries):
        tokens = list(base)
        n_edits = int(rng.integers(spec.min_edits, spec.max_edits + 1))
        trace: list[Edit] = []
        guard = 0
        while len(trace) < n_edits and guard < 50:
            guard += 1
            e = _apply_one(tokens, kinds[int(rng.choice(len(kinds), p=w))], rng)
            if e is not None:
                trace.append(e)
        out = "".join(tokens)
        if trace and not validate(out).valid:
            return out, trace
    raise CorruptionExhausted(f"{spec.max_tries} corruptions of {smiles!r} all stayed valid")
