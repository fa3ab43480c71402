"""The fixed 29-token SMILES vocabulary."""

from __future__ import annotations

SOS = "<sos>"
EOS = "<eos>"
PAD = "<pad>"
UNK = "<unknown>"
MASK = "<mask>"

SPECIAL_TOKENS = (SOS, EOS, PAD, UNK, MASK)
ATOM_TOKENS = ("C", "c", "O", "o", "N", "n", "S", "s", "F", "Cl", "Br", "[H]", "[nH]")
RING_TOKENS = ("1", "2", "3", "4", "5", "6")
BOND_TOKENS = ("-", "=", "#")
BRANCH_TOKENS = ("(", ")")

SOS_ID, EOS_ID, PAD_ID, UNK_ID, MASK_ID = range(5)

MAX_CONTENT_LEN = 80
# sos + content + eos
PADDED_WIDTH = MAX_CONTENT_LEN + 2


class Vocabulary:
    """Bidirectional token <-> id map. Special tokens occupy ids 0-4."""

    def __init__(self) -> None:
        self.entries: tuple[str, ...] = (
            SPECIAL_TOKENS + ATOM_TOKENS + RING_TOKENS + BOND_TOKENS + BRANCH_TOKENS
        )
        self._id_of = {tok: i for i, tok in enumerate(self.entries)}

    def __len__(self) -> int:
        return len(self.entries)

    def id_of(self, token: str) -> int:
        return self._id_of[token]

    def token_of(self, idx: int) -> str:
        return self.entries[idx]

    def __contains__(self, token: str) -> bool:
        return token in self._id_of

    @property
    def content_tokens(self) -> tuple[str, ...]:
        return self.entries[len(SPECIAL_TOKENS):]


VOCAB = Vocabulary()

ATOM_IDS = frozenset(VOCAB.id_of(t) for t in ATOM_TOKENS)
RING_IDS = frozenset(VOCAB.id_of(t) for t in RING_TOKENS)
BOND_IDS = frozenset(VOCAB.id_of(t) for t in BOND_TOKENS)
BRANCH_OPEN_ID = VOCAB.id_of("(")
BRANCH_CLOSE_ID = VOCAB.id_of(")")
SPECIAL_IDS = frozenset(range(len(SPECIAL_TOKENS)))
CONTENT_IDS = tuple(range(len(SPECIAL_TOKENS), len(VOCAB)))
