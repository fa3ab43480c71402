"""Greedy longest-match tokenization over the fixed vocabulary."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from smilesfix.errors import ContainsUnknown, LengthExceeded
from smilesfix.smiles.vocab import (
    EOS_ID,
    MAX_CONTENT_LEN,
    PAD_ID,
    PADDED_WIDTH,
    SOS_ID,
    SPECIAL_IDS,
    UNK_ID,
    VOCAB,
)

# Multi-character tokens first so the alternation is longest-match.
_CONTENT = sorted(VOCAB.content_tokens, key=len, reverse=True)
_TOKEN_RE = re.compile("|".join(re.escape(t) for t in _CONTENT) + r"|.", re.DOTALL)
_ID_OF = {t: VOCAB.id_of(t) for t in _CONTENT}


@dataclass(frozen=True)
class TokenSequence:
    """Integer-coded SMILES. ``ids`` may or may not carry sos/eos/pad."""

    ids: tuple[int, ...]

    @property
    def content_len(self) -> int:
        return len(self.content())

    @property
    def tokens(self) -> list[str]:
        return [VOCAB.token_of(i) for i in self.ids]

    def __len__(self) -> int:
        return len(self.ids)

    def content(self) -> tuple[int, ...]:
        """Ids with sos/eos/pad stripped."""
        return tuple(i for i in self.ids if i not in (SOS_ID, EOS_ID, PAD_ID))


def split_tokens(s: str) -> list[str]:
    """Segment ``s`` into token strings; unmatched characters come back alone."""
    return _TOKEN_RE.findall(s)


def tokenize(s: str, max_len: int | None = MAX_CONTENT_LEN) -> TokenSequence:
    """Tokenize a SMILES string.

    Characters matching no vocabulary entry become ``<unknown>``. The result
    has no sos/eos; :func:`pad_sequence` adds them.

    Raises:
        LengthExceeded: more than ``max_len`` content tokens.
    """
    get = _ID_OF.get
    ids = tuple([get(t, UNK_ID) for t in _TOKEN_RE.findall(s)])
    if max_len is not None and len(ids) > max_len:
        raise LengthExceeded(len(ids), max_len)
    return TokenSequence(ids)


def detokenize(t: TokenSequence | Sequence[int]) -> str:
    ids = t.ids if isinstance(t, TokenSequence) else tuple(t)
    out = []
    for pos, i in enumerate(ids):
        if i in (SOS_ID, EOS_ID, PAD_ID):
            continue
        if i in SPECIAL_IDS:
            raise ContainsUnknown(pos)
        out.append(VOCAB.token_of(i))
    return "".join(out)


def pad_sequence(t: TokenSequence | Sequence[int], width: int = PADDED_WIDTH) -> list[int]:
    """``sos, content, eos`` then pad up to ``width``."""
    content = t.content() if isinstance(t, TokenSequence) else tuple(t)
    if len(content) + 2 > width:
        raise LengthExceeded(len(content), width - 2)
    row = [SOS_ID, *content, EOS_ID]
    row.extend([PAD_ID] * (width - len(row)))
    return row


def strip_decoded(ids: Iterable[int]) -> list[int]:
    """Cut a decoder output at the first eos, dropping sos/pad."""
    out = []
    for i in ids:
        if i == EOS_ID:
            break
        if i in (SOS_ID, PAD_ID):
            continue
        out.append(int(i))
    return out
