"""Chemical checks: aromatic ring membership, kekulization, valence."""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass
from typing import Iterable, TextIO

from smilesfix.errors import KekulizationFailure, LengthExceeded, SmilesSyntaxError
from smilesfix.smiles.graph import AROMATIC, DOUBLE, SINGLE, Bond, MolGraph, parse

# C-level constructor; the namedtuple __new__ is a Python function
_bond = functools.partial(tuple.__new__, Bond)
from smilesfix.smiles.tokenizer import tokenize
from smilesfix.smiles.vocab import MASK_ID, MAX_CONTENT_LEN, UNK_ID

ALLOWED_VALENCE: dict[str, tuple[int, ...]] = {
    "C": (4,), "N": (3,), "O": (2,), "S": (2, 4, 6),
    "F": (1,), "Cl": (1,), "Br": (1,), "H": (1,),
}

FAILURE_CLASSES = (
    "tokenization", "syntax", "ring_closure", "branch",
    "valence", "aromaticity", "kekulization", "length",
)


@dataclass(frozen=True)
class ValidityVerdict:
    valid: bool
    failure_class: str | None = None
    failure_position: int | None = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.valid


VALID = ValidityVerdict(True)


def check_aromatic_rings(g: MolGraph) -> ValidityVerdict:
    """Every aromatic-flagged atom must sit on a ring."""
    ring = g.ring_membership
    for a, arom in enumerate(g.aromatic):
        if arom and not ring[a]:
            return ValidityVerdict(False, "aromaticity", g.positions[a], "non-ring atom marked aromatic")
    return VALID


def _needs_double_bond(g: MolGraph, a: int) -> bool:
    """Atoms that must take exactly one double bond in a Kekulé structure.

    An aromatic atom with at least one aromatic bond qualifies when it still
    has valence room: bond orders (aromatic counted as 1) plus explicit H fall
    short of the smallest allowed valence at or above that sum. So ``c`` with
    three connections does, ``[nH]``, three-connected ``n``, ``o`` and
    two-connected ``s`` do not, and neither does an atom already carrying an
    exocyclic double bond. A three-connected ``s`` reaches for valence 4 and
    therefore does.
    """
    if not g.aromatic[a]:
        return False
    used = g.explicit_h[a]
    has_aromatic = False
    bonds = g.bonds
    for k in g.adjacency[a].values():
        o = bonds[k][2]
        if o == AROMATIC:
            has_aromatic = True
            used += 1
        else:
            used += o
    if not has_aromatic:
        return False
    target = next((v for v in ALLOWED_VALENCE[g.elements[a]] if v >= used), None)
    return target is not None and used < target


def matching_required(g: MolGraph) -> list[int]:
    return _required_atoms(g)


def _required_atoms(g: MolGraph) -> list[int]:
    """Vectorised form of :func:`_needs_double_bond` over all atoms (one pass over bonds)."""
    arom = g.aromatic
    used = list(g.explicit_h)
    has_arom = [False] * len(arom)
    for i, j, o in g.bonds:
        if o == AROMATIC:
            used[i] += 1
            used[j] += 1
            has_arom[i] = has_arom[j] = True
        else:
            used[i] += o
            used[j] += o
    out = []
    elements = g.elements
    for a, flag in enumerate(arom):
        if flag and has_arom[a]:
            u = used[a]
            for v in ALLOWED_VALENCE[elements[a]]:
                if v >= u:
                    if u < v:
                        out.append(a)
                    break
    return out


def kekulize(g: MolGraph) -> MolGraph:
    """Replace aromatic bonds by an alternating single/double assignment.

    Solves a perfect matching over the atoms that need a double bond, using
    only aromatic bonds between two such atoms. Aromatic atom flags are kept.

    Raises:
        KekulizationFailure: no perfect matching exists.
    """
    bonds = g.bonds
    if not any(o == AROMATIC for _, _, o in bonds):
        return g
    required = _required_atoms(g)
    req = set(required)
    nbrs: dict[int, set[int]] = {a: set() for a in required}
    for i, j, o in bonds:
        if o == AROMATIC and i in req and j in req:
            nbrs[i].add(j)
            nbrs[j].add(i)
    mate: dict[int, int] = {}
    if not _match(nbrs, set(required), mate):
        free = [a for a in required if a not in mate] or required
        raise KekulizationFailure("no Kekulé structure for aromatic system", g.positions[free[0]] if free else None)

    new_bonds = [
        _bond((i, j, (DOUBLE if mate.get(i) == j else SINGLE) if o == AROMATIC else o))
        for i, j, o in bonds
    ]
    return g.copy(new_bonds)


def _match(nbrs: dict[int, set[int]], unmatched: set[int], mate: dict[int, int]) -> bool:
    """Backtracking perfect matching, most-constrained atom first."""
    if not unmatched:
        return True
    best, best_opts = -1, None
    for a in unmatched:
        opts = nbrs[a] & unmatched
        if not opts:
            return False
        if best_opts is None or len(opts) < len(best_opts):
            best, best_opts = a, opts
            if len(opts) == 1:
                break
    unmatched.discard(best)
    for b in best_opts:
        unmatched.discard(b)
        mate[best], mate[b] = b, best
        if _match(nbrs, unmatched, mate):
            return True
        del mate[best], mate[b]
        unmatched.add(b)
    unmatched.add(best)
    return False


def _bond_sums(g: MolGraph) -> list[float]:
    sums = [float(h) for h in g.explicit_h]
    for i, j, o in g.bonds:
        v = 1.5 if o == AROMATIC else o
        sums[i] += v
        sums[j] += v
    return sums


def check_valence(g: MolGraph) -> ValidityVerdict:
    """Valence check against :data:`ALLOWED_VALENCE`.

    A graph that still has aromatic bonds is kekulized first; if that is not
    possible, aromatic bonds count 1.5 and the per-atom sum is floored.
    """
    if any(o == AROMATIC for _, _, o in g.bonds):
        try:
            g = kekulize(g)
        except KekulizationFailure:
            pass
    for a, total in enumerate(_bond_sums(g)):
        e = g.elements[a]
        allowed = ALLOWED_VALENCE[e]
        if e == "H":
            return ValidityVerdict(False, "valence", g.positions[a], "hydrogen not bonded to exactly one heavy atom")
        if int(total) > allowed[-1]:
            return ValidityVerdict(False, "valence", g.positions[a], f"{e} valence {total:g} exceeds {allowed[-1]}")
    return VALID


def implicit_hydrogens(g: MolGraph) -> list[int]:
    """Implicit H per atom of a kekulized (or aliphatic) graph.

    Non-bracket atoms are filled up to the smallest allowed valence at or
    above their current bond sum; bracket atoms get none.
    """
    out = []
    for a, total in enumerate(_bond_sums(g)):
        if g.bracket[a]:
            out.append(0)
            continue
        t = int(total)
        fill = next((v for v in ALLOWED_VALENCE[g.elements[a]] if v >= t), t)
        out.append(fill - t)
    return out


def total_hydrogens(g: MolGraph) -> list[int]:
    """Explicit + implicit H per atom; kekulizes aromatic graphs internally."""
    kg = kekulize(g)
    return [h + i for h, i in zip(kg.explicit_h, implicit_hydrogens(kg))]


def verdict_for_graph(g: MolGraph) -> ValidityVerdict:
    v = check_aromatic_rings(g)
    if not v:
        return v
    try:
        kg = kekulize(g)
    except KekulizationFailure as exc:
        return ValidityVerdict(False, "kekulization", exc.atom, str(exc))
    return check_valence(kg)


@functools.lru_cache(maxsize=262144)
def validate(s: str) -> ValidityVerdict:
    """Composite verdict; never raises.

    Order: tokenization/length, parse, aromatic ring membership,
    kekulization, valence. The first failing stage names the class.
    """
    try:
        ts = tokenize(s, max_len=MAX_CONTENT_LEN)
    except LengthExceeded as exc:
        return ValidityVerdict(False, "length", MAX_CONTENT_LEN, str(exc))
    ids = ts.ids
    if UNK_ID in ids or MASK_ID in ids:
        pos = next(p for p, tid in enumerate(ids) if tid == UNK_ID or tid == MASK_ID)
        return ValidityVerdict(False, "tokenization", pos, "character outside the vocabulary")
    try:
        g = parse(ts)
    except SmilesSyntaxError as exc:
        return ValidityVerdict(False, exc.kind, exc.position, str(exc))
    return verdict_for_graph(g)


def _structurally_broken(s: str) -> bool:
    # Sufficient conditions for invalidity that need no parse: an odd number of
    # any ring digit leaves a ring open, unequal parentheses leave a branch open.
    if s.count("(") != s.count(")"):
        return True
    for d in "123456":
        if s.count(d) & 1:
            return True
    return False


def is_valid(s: str) -> bool:
    """Boolean validity; skips the full check for obviously broken strings."""
    if _structurally_broken(s):
        return False
    return validate(s).valid


def write_verdicts_csv(smiles: Iterable[str], fh: TextIO) -> None:
    """CSV export: smiles,valid,failure_class,failure_position."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["smiles", "valid", "failure_class", "failure_position"])
    for s in smiles:
        v = validate(s)
        w.writerow([
            s, int(v.valid), v.failure_class or "",
            "" if v.failure_position is None else v.failure_position,
        ])
