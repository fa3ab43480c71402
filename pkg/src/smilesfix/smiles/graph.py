"""Molecular graph and the SMILES parser for the restricted dialect."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

from smilesfix.errors import SmilesSyntaxError
from smilesfix.smiles.tokenizer import TokenSequence, tokenize
from smilesfix.smiles.vocab import (
    BRANCH_CLOSE_ID,
    BRANCH_OPEN_ID,
    EOS_ID,
    MASK_ID,
    PAD_ID,
    SOS_ID,
    UNK_ID,
    VOCAB,
)

SINGLE, DOUBLE, TRIPLE, AROMATIC = 1, 2, 3, 4
BOND_ORDER_NAMES = {SINGLE: "single", DOUBLE: "double", TRIPLE: "triple", AROMATIC: "aromatic"}
BOND_SYMBOL_ORDER = {"-": SINGLE, "=": DOUBLE, "#": TRIPLE}
# aromatic counts 1.5
BOND_VALENCE = {SINGLE: 1.0, DOUBLE: 2.0, TRIPLE: 3.0, AROMATIC: 1.5}

# token -> (element, aromatic, explicit H)
_ATOM_SPEC = {
    "C": ("C", False, 0), "c": ("C", True, 0),
    "O": ("O", False, 0), "o": ("O", True, 0),
    "N": ("N", False, 0), "n": ("N", True, 0),
    "S": ("S", False, 0), "s": ("S", True, 0),
    "F": ("F", False, 0), "Cl": ("Cl", False, 0), "Br": ("Br", False, 0),
    "[H]": ("H", False, 0), "[nH]": ("N", True, 1),
}
_ATOM_BY_ID = {VOCAB.id_of(t): spec for t, spec in _ATOM_SPEC.items()}
_RING_BY_ID = {VOCAB.id_of(str(d)): d for d in range(1, 7)}
_BOND_BY_ID = {VOCAB.id_of(t): o for t, o in BOND_SYMBOL_ORDER.items()}


class Atom(NamedTuple):
    element: str
    aromatic: bool
    explicit_h: int


class Bond(NamedTuple):
    i: int
    j: int
    order: int


@dataclass(eq=False)
class MolGraph:
    """Heavy-atom graph. Hydrogens live in ``explicit_h`` (from ``[nH]`` / ``[H]``).

    ``bracket`` marks atoms written in brackets; those never receive implicit
    hydrogens. ``positions`` maps atoms back to token indices for diagnostics.
    An element of ``"H"`` only survives parsing when the hydrogen could not be
    folded onto a single heavy neighbour; valence checking rejects it.
    """

    elements: list[str]
    aromatic: list[bool]
    explicit_h: list[int]
    bracket: list[bool]
    bonds: list[Bond]
    positions: list[int]

    def __post_init__(self) -> None:
        self._adj: list[dict[int, int]] | None = None
        self._ring_bonds: frozenset[int] | None = None

    # ------------------------------------------------------------------ views
    @property
    def n_atoms(self) -> int:
        return len(self.elements)

    @property
    def atoms(self) -> list[Atom]:
        return [Atom(e, a, h) for e, a, h in zip(self.elements, self.aromatic, self.explicit_h)]

    @property
    def adjacency(self) -> list[dict[int, int]]:
        """Per atom: neighbour index -> bond index."""
        if self._adj is None:
            adj: list[dict[int, int]] = [{} for _ in self.elements]
            for k, (i, j, _) in enumerate(self.bonds):
                adj[i][j] = k
                adj[j][i] = k
            self._adj = adj
        return self._adj

    def degree(self, a: int) -> int:
        return len(self.adjacency[a])

    def bond_between(self, i: int, j: int) -> Bond | None:
        k = self.adjacency[i].get(j)
        return None if k is None else self.bonds[k]

    @property
    def ring_bonds(self) -> frozenset[int]:
        """Indices of bonds lying on a cycle (i.e. not bridges)."""
        if self._ring_bonds is None:
            self._ring_bonds = frozenset(range(len(self.bonds))) - _bridges(self)
        return self._ring_bonds

    @property
    def ring_membership(self) -> list[bool]:
        flags = [False] * self.n_atoms
        for k in self.ring_bonds:
            i, j, _ = self.bonds[k]
            flags[i] = flags[j] = True
        return flags

    def cycle_rank(self) -> int:
        return len(self.bonds) - self.n_atoms + _n_components(self)

    def copy(self, bonds: Sequence[Bond] | None = None) -> "MolGraph":
        return MolGraph(
            list(self.elements), list(self.aromatic), list(self.explicit_h),
            list(self.bracket), list(self.bonds if bonds is None else bonds), list(self.positions),
        )

    def subgraph(self, keep: Sequence[int]) -> "MolGraph":
        """Induced subgraph on ``keep`` (order preserved)."""
        remap = {a: n for n, a in enumerate(keep)}
        bonds = [Bond(remap[i], remap[j], o) for i, j, o in self.bonds if i in remap and j in remap]
        return MolGraph(
            [self.elements[a] for a in keep], [self.aromatic[a] for a in keep],
            [self.explicit_h[a] for a in keep], [self.bracket[a] for a in keep],
            bonds, [self.positions[a] for a in keep],
        )

    def permuted(self, perm: Sequence[int]) -> "MolGraph":
        """Relabel atoms: new atom ``n`` is old atom ``perm[n]``. Bond list is re-sorted."""
        inv = {old: new for new, old in enumerate(perm)}
        bonds = sorted(
            Bond(min(inv[i], inv[j]), max(inv[i], inv[j]), o) for i, j, o in self.bonds
        )
        g = self.subgraph(list(perm))
        g.bonds = bonds
        g._adj = None
        return g


def _bridges(g: MolGraph) -> frozenset[int]:
    """Tarjan bridge finding, iterative."""
    n = g.n_atoms
    adj = g.adjacency
    disc = [-1] * n
    low = [0] * n
    bridges = set()
    t = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        disc[root] = low[root] = t
        t += 1
        stack = [(root, -1, iter(adj[root].items()))]
        while stack:
            v, parent_edge, it = stack[-1]
            advanced = False
            for w, k in it:
                if k == parent_edge:
                    continue
                if disc[w] == -1:
                    disc[w] = low[w] = t
                    t += 1
                    stack.append((w, k, iter(adj[w].items())))
                    advanced = True
                    break
                low[v] = min(low[v], disc[w])
            if advanced:
                continue
            stack.pop()
            if stack:
                u = stack[-1][0]
                low[u] = min(low[u], low[v])
                if low[v] > disc[u]:
                    bridges.add(parent_edge)
    return frozenset(bridges)


def _n_components(g: MolGraph) -> int:
    seen = [False] * g.n_atoms
    count = 0
    for s in range(g.n_atoms):
        if seen[s]:
            continue
        count += 1
        seen[s] = True
        stack = [s]
        while stack:
            v = stack.pop()
            for w in g.adjacency[v]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
    return count


_new_bond = tuple.__new__

_START, _ATOM_LAST, _RING_LAST, _BOND_LAST, _OPEN, _CLOSE_LAST = range(6)
_ATOM, _RING, _BOND, _BRANCH, _CLOSE, _SKIP, _INVALID = "atom", "ring", "bond", "branch", "close", "skip", "invalid"
_BAD = (_INVALID, None)
_BRACKET_IDS = {VOCAB.id_of("[nH]"), VOCAB.id_of("[H]")}
_DISPATCH: dict[int, tuple] = {}
for _tid, (_e, _a, _h) in _ATOM_BY_ID.items():
    _DISPATCH[_tid] = (_ATOM, (_e, _a, _h, _tid in _BRACKET_IDS))
for _tid, _d in _RING_BY_ID.items():
    _DISPATCH[_tid] = (_RING, _d)
for _tid, _o in _BOND_BY_ID.items():
    _DISPATCH[_tid] = (_BOND, _o)
_DISPATCH[BRANCH_OPEN_ID] = (_BRANCH, None)
_DISPATCH[BRANCH_CLOSE_ID] = (_CLOSE, None)
for _tid in (SOS_ID, EOS_ID, PAD_ID):
    _DISPATCH[_tid] = (_SKIP, None)


def _default_order(aromatic: list[bool], i: int, j: int) -> int:
    return AROMATIC if aromatic[i] and aromatic[j] else SINGLE


def parse(t: TokenSequence | str) -> MolGraph:
    """Build the atom/bond graph for a token sequence.

    Branches push/pop the attachment point, ring digits open on first sight
    and close on the second (and may be reused afterwards), bond tokens set the
    order of the next attachment. Bonds between two aromatic atoms default to
    aromatic, but an aromatic-order bond that ends up outside every ring is
    demoted to single, as ordinary SMILES readers do.

    Raises:
        SmilesSyntaxError: with ``kind`` tokenization, syntax, branch or
            ring_closure and the offending token index.
    """
    if isinstance(t, str):
        t = tokenize(t, max_len=None)

    atoms: list[tuple] = []  # (element, aromatic, explicit H, bracket, position)
    aromatic: list[bool] = []
    bonds: list[Bond] = []
    # spanning tree: parent atom and the bond to it; ring closures mark tree paths
    parent: list[int] = []
    parent_bond: list[int] = []
    ring_bonds: set[int] = set()
    closures: set[tuple[int, int]] = set()
    closure_ends: list[tuple[int, int]] = []

    prev = -1
    pending: int | None = None
    pending_pos = -1
    branches: list[tuple[int, int]] = []  # (attachment atom, token pos)
    rings: dict[int, tuple[int, int | None, int]] = {}  # digit -> (atom, order, pos)
    last = _START
    # local aliases keep the hot loop cheap
    dispatch = _DISPATCH.get
    add_atom, add_arom, add_bond = atoms.append, aromatic.append, bonds.append
    add_parent, add_parent_bond = parent.append, parent_bond.append

    for pos, tid in enumerate(t.ids):
        kind, payload = dispatch(tid, _BAD)

        if kind is _ATOM:
            arom = payload[1]
            a = len(atoms)
            add_atom(payload + (pos,))
            add_arom(arom)
            if prev >= 0:
                if pending is None:
                    pending = AROMATIC if arom and aromatic[prev] else SINGLE
                add_parent(prev)
                add_parent_bond(len(bonds))
                add_bond(_new_bond(Bond, (prev, a, pending)))
            else:
                add_parent(-1)
                add_parent_bond(-1)
            pending = None
            prev = a
            last = _ATOM_LAST
            continue

        if kind is _RING:
            if last == _START or last == _OPEN:
                raise SmilesSyntaxError("ring bond without a preceding atom", pos, "syntax")
            if payload in rings:
                other, order0, _ = rings.pop(payload)
                if other == prev:
                    raise SmilesSyntaxError("ring closure onto the same atom", pos, "ring_closure")
                if order0 is not None and pending is not None and order0 != pending:
                    raise SmilesSyntaxError("conflicting ring bond orders", pos, "ring_closure")
                order = order0 if order0 is not None else pending
                if order is None:
                    order = AROMATIC if aromatic[other] and aromatic[prev] else SINGLE
                key = (other, prev) if other < prev else (prev, other)
                if key in closures or parent[key[1]] == key[0]:
                    raise SmilesSyntaxError("duplicate bond between atoms", pos, "ring_closure")
                closures.add(key)
                closure_ends.append((other, prev))
                ring_bonds.add(len(bonds))
                bonds.append(_new_bond(Bond, (key[0], key[1], order)))
            else:
                rings[payload] = (prev, pending, pos)
            pending = None
            last = _RING_LAST
            continue

        if kind is _BOND:
            if last == _START or last == _BOND_LAST:
                raise SmilesSyntaxError("bond symbol in illegal position", pos, "syntax")
            pending = payload
            pending_pos = pos
            last = _BOND_LAST
            continue

        if kind is _BRANCH:
            if last == _START:
                raise SmilesSyntaxError("branch opened before any atom", pos, "branch")
            if last == _BOND_LAST:
                raise SmilesSyntaxError("bond symbol before branch", pos, "syntax")
            if last == _OPEN:
                raise SmilesSyntaxError("nested branch with no atom", pos, "branch")
            branches.append((prev, pos))
            last = _OPEN
            continue

        if kind is _CLOSE:
            if not branches:
                raise SmilesSyntaxError("unmatched branch close", pos, "branch")
            if last == _OPEN:
                raise SmilesSyntaxError("empty branch", pos, "branch")
            if last == _BOND_LAST:
                raise SmilesSyntaxError("dangling bond before branch close", pending_pos, "syntax")
            prev = branches.pop()[0]
            last = _CLOSE_LAST
            continue

        if kind is _SKIP:
            continue
        raise SmilesSyntaxError("token outside the dialect", pos, "tokenization")

    if last == _START:
        raise SmilesSyntaxError("no atoms", None, "syntax")
    if last == _BOND_LAST:
        raise SmilesSyntaxError("dangling bond at end", pending_pos, "syntax")
    if branches:
        raise SmilesSyntaxError("unclosed branch", branches[-1][1], "branch")
    if rings:
        first = min(rings.values(), key=lambda r: r[2])
        raise SmilesSyntaxError("unclosed ring bond", first[2], "ring_closure")

    if closure_ends:
        # each closure puts the spanning-tree path between its ends on a cycle
        depth = [0] * len(atoms)
        for a in range(1, len(atoms)):
            if parent[a] >= 0:
                depth[a] = depth[parent[a]] + 1
        for x, y in closure_ends:
            while x != y:
                if depth[x] >= depth[y]:
                    ring_bonds.add(parent_bond[x])
                    x = parent[x]
                else:
                    ring_bonds.add(parent_bond[y])
                    y = parent[y]

    elements, _, explicit_h, bracket, positions = (list(c) for c in zip(*atoms))
    g = MolGraph(elements, aromatic, explicit_h, bracket, bonds, positions)
    g._ring_bonds = frozenset(ring_bonds)
    g = _fold_hydrogens(g)
    ring = g.ring_bonds
    if not ring.issuperset([k for k, b in enumerate(g.bonds) if b[2] == AROMATIC]):
        g2 = g.copy([
            Bond(i, j, SINGLE) if o == AROMATIC and k not in ring else Bond(i, j, o)
            for k, (i, j, o) in enumerate(g.bonds)
        ])
        g2._ring_bonds = ring
        g = g2
    return g


def _fold_hydrogens(g: MolGraph) -> MolGraph:
    """Turn each ``[H]`` singly bonded to one heavy atom into an explicit H count."""
    if "H" not in g.elements:
        return g
    adj = g.adjacency
    fold = []
    for a, e in enumerate(g.elements):
        if e != "H" or len(adj[a]) != 1:
            continue
        (nb, k), = adj[a].items()
        if g.elements[nb] != "H" and g.bonds[k].order == SINGLE:
            fold.append((a, nb))
    if not fold:
        return g
    h = list(g.explicit_h)
    for _, nb in fold:
        h[nb] += 1
    drop = {a for a, _ in fold}
    keep = [a for a in range(g.n_atoms) if a not in drop]
    g2 = g.copy()
    g2.explicit_h = h
    return g2.subgraph(keep)
