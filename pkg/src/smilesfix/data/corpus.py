"""Corpus reading, filtering and the corpus manifest."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

from smilesfix.errors import EmptyCorpus, LengthExceeded
from smilesfix.smiles.chem import validate
from smilesfix.smiles.tokenizer import tokenize
from smilesfix.smiles.vocab import MASK_ID, MAX_CONTENT_LEN, UNK_ID

# Sizes of the full-scale benchmark split, recorded for reference only.
REFERENCE_CONFIGURATION = {"source": "MOSES", "train": 1_584_663, "test": 176_074, "scaffold_test": 176_226}


def iter_smiles_lines(path) -> Iterator[tuple[int, str]]:
    """(line number, first whitespace field) for non-blank, non-comment lines."""
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            yield n, s.split()[0]


def read_smiles(path) -> list[str]:
    return [s for _, s in iter_smiles_lines(path)]


def write_smiles(path, smiles) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in smiles:
            fh.write(s + "\n")


def content_hash(smiles) -> str:
    h = hashlib.sha256()
    for s in smiles:
        h.update(s.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


@dataclass
class CorpusManifest:
    source: str
    total: int
    accepted: int
    rejected: dict[str, int]
    content_hash: str
    max_len: int = MAX_CONTENT_LEN
    limit: int | None = None
    split_sizes: dict[str, int] = field(default_factory=dict)
    reference_configuration: dict = field(default_factory=lambda: dict(REFERENCE_CONFIGURATION))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def classify(s: str, max_len: int = MAX_CONTENT_LEN) -> str | None:
    """Rejection cause (vocab, length, validity) or None if accepted."""
    try:
        ts = tokenize(s, max_len=None)
    except LengthExceeded:  # pragma: no cover - max_len=None never raises
        return "length"
    if UNK_ID in ts.ids or MASK_ID in ts.ids:
        return "vocab"
    if len(ts.ids) > max_len:
        return "length"
    return None if validate(s).valid else "validity"


def load_corpus(path, max_len: int = MAX_CONTENT_LEN, limit: int | None = None) -> tuple[list[str], CorpusManifest]:
    """Keep lines inside the vocabulary, within ``max_len`` tokens and valid.

    ``limit`` caps the number of accepted molecules (first-come).

    Raises:
        OSError: unreadable file.
        EmptyCorpus: nothing accepted.
    """
    accepted: list[str] = []
    rejected = {"vocab": 0, "length": 0, "validity": 0}
    total = 0
    for _, s in iter_smiles_lines(path):
        if limit is not None and len(accepted) >= limit:
            break
        total += 1
        cause = classify(s, max_len)
        if cause is None:
            accepted.append(s)
        else:
            rejected[cause] += 1
    if not accepted:
        raise EmptyCorpus(f"no molecules accepted from {path}")
    manifest = CorpusManifest(str(Path(path)), total, len(accepted), rejected, content_hash(accepted),
                              max_len, limit)
    return accepted, manifest
