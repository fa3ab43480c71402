"""Canonical SMILES by rank refinement plus lexicographic tie breaking."""

from __future__ import annotations

import sys
from typing import Sequence

from smilesfix.errors import InvalidGraph, KekulizationFailure, SmilesSyntaxError
from smilesfix.smiles.chem import ALLOWED_VALENCE, total_hydrogens, verdict_for_graph
from smilesfix.smiles.graph import AROMATIC, DOUBLE, SINGLE, TRIPLE, MolGraph, parse

# Leaves explored in the tie-breaking search before settling for the first
# branch. Only reached by highly symmetric graphs far outside the corpus.
MAX_TIE_LEAVES = 20000

_RING_DIGITS = "123456"


def atom_invariants(g: MolGraph, hydrogens: Sequence[int] | None = None) -> list[tuple]:
    """(element, aromatic, degree, hydrogen count) per atom."""
    if hydrogens is None:
        hydrogens = total_hydrogens(g)
    return [
        (g.elements[a], g.aromatic[a], g.degree(a), hydrogens[a])
        for a in range(g.n_atoms)
    ]


def _dense_rank(keys: Sequence) -> list[int]:
    order = {k: r for r, k in enumerate(sorted(set(keys)))}
    return [order[k] for k in keys]


def refine_ranks(g: MolGraph, ranks: Sequence[int]) -> list[int]:
    """Refine ranks by sorted (bond order, neighbour rank) multisets to a fixed point."""
    ranks = list(ranks)
    adj = g.adjacency
    n_classes = len(set(ranks))
    while True:
        keys = [
            (ranks[a], tuple(sorted((g.bonds[k].order, ranks[b]) for b, k in adj[a].items())))
            for a in range(g.n_atoms)
        ]
        new = _dense_rank(keys)
        n_new = len(set(new))
        if n_new == n_classes:
            return new
        ranks, n_classes = new, n_new


def _bond_symbol(g: MolGraph, i: int, j: int, order: int) -> str:
    if order == DOUBLE:
        return "="
    if order == TRIPLE:
        return "#"
    if order == SINGLE and g.aromatic[i] and g.aromatic[j]:
        return "-"
    return ""


def _atom_symbol(g: MolGraph, a: int, hydrogens: Sequence[int]) -> str:
    e = g.elements[a]
    if g.aromatic[a]:
        if e == "N" and g.explicit_h[a] > 0:
            return "[nH]"
        return e.lower()
    sym = e
    # Only multi-valence elements can lose hydrogens when written bare.
    if len(ALLOWED_VALENCE[e]) > 1 and hydrogens[a] > 0:
        bsum = sum(min(g.bonds[k].order, 3) for k in g.adjacency[a].values())
        fill = next((v for v in ALLOWED_VALENCE[e] if v >= bsum), bsum)
        missing = hydrogens[a] - (fill - bsum)
        if missing > 0:
            sym += "([H])" * missing
    return sym


def write_smiles(g: MolGraph, ranks: Sequence[int], hydrogens: Sequence[int]) -> str:
    """DFS writer; starts at the lowest-ranked atom, visits neighbours by rank."""
    n = g.n_atoms
    if n == 0:
        return ""
    adj = g.adjacency
    nbrs = [sorted(adj[a], key=lambda b: ranks[b]) for a in range(n)]

    visited = [False] * n
    children: list[list[int]] = [[] for _ in range(n)]
    openings: list[list[int]] = [[] for _ in range(n)]  # closing partners, in discovery order
    closings: list[list[int]] = [[] for _ in range(n)]
    ring_edges: set[tuple[int, int]] = set()
    parts: list[str] = []

    sys.setrecursionlimit(max(sys.getrecursionlimit(), 4 * n + 100))

    def dfs(v: int, parent: int) -> None:
        visited[v] = True
        for w in nbrs[v]:
            if w == parent:
                continue
            if visited[w]:
                key = (min(v, w), max(v, w))
                if key not in ring_edges:
                    ring_edges.add(key)
                    openings[w].append(v)
                    closings[v].append(w)
            else:
                children[v].append(w)
                dfs(w, v)

    roots = []
    for start in sorted(range(n), key=lambda a: ranks[a]):
        if not visited[start]:
            roots.append(start)
            dfs(start, -1)

    free = list(_RING_DIGITS)
    digit_of: dict[tuple[int, int], str] = {}

    def emit(v: int, parent: int) -> None:
        parts.append(_atom_symbol(g, v, hydrogens))
        released = []
        for w in closings[v]:
            key = (min(v, w), max(v, w))
            d = digit_of.pop(key)
            parts.append(d)
            released.append(d)
        for w in openings[v]:
            if not free:
                raise InvalidGraph("more than six simultaneously open rings")
            d = free.pop(0)
            digit_of[(min(v, w), max(v, w))] = d
            parts.append(_bond_symbol(g, v, w, g.bond_between(v, w).order) + d)
        free.extend(released)
        free.sort()
        kids = children[v]
        for idx, w in enumerate(kids):
            sym = _bond_symbol(g, v, w, g.bond_between(v, w).order)
            if idx < len(kids) - 1:
                parts.append("(" + sym)
                emit(w, v)
                parts.append(")")
            else:
                parts.append(sym)
                emit(w, v)

    for k, r in enumerate(roots):
        if k:
            parts.append(".")
        emit(r, -1)
    return "".join(parts)


def _search(g: MolGraph, ranks: list[int], hydrogens: Sequence[int], budget: list[int]) -> str:
    ranks = refine_ranks(g, ranks)
    counts: dict[int, list[int]] = {}
    for a, r in enumerate(ranks):
        counts.setdefault(r, []).append(a)
    tied = [r for r, members in counts.items() if len(members) > 1]
    if not tied:
        budget[0] -= 1
        return write_smiles(g, ranks, hydrogens)
    r0 = min(tied)
    best = None
    for a in counts[r0]:
        # Break the tie in favour of ``a``: doubled ranks keep the order, a gets one less.
        trial = [2 * r for r in ranks]
        trial[a] -= 1
        s = _search(g, trial, hydrogens, budget)
        if best is None or s < best:
            best = s
        if budget[0] <= 0:
            break
    return best


def canonical_string(g: MolGraph) -> str:
    """Canonical writer without the validity gate (for scaffolds and fragments)."""
    if g.n_atoms == 0:
        return ""
    try:
        hydrogens = total_hydrogens(g)
    except KekulizationFailure:
        hydrogens = list(g.explicit_h)
    inv = atom_invariants(g, hydrogens)
    return _search(g, _dense_rank(inv), hydrogens, [MAX_TIE_LEAVES])


def canonicalize(g: MolGraph) -> str:
    """Deterministic canonical SMILES; invariant to atom order.

    Raises:
        InvalidGraph: the graph does not pass the validity checks.
    """
    if g.n_atoms == 0:
        return ""
    v = verdict_for_graph(g)
    if not v.valid:
        raise InvalidGraph(f"{v.failure_class}: {v.detail}")
    return canonical_string(g)


def canonical_smiles(s: str) -> str | None:
    """Parse and canonicalize; ``None`` when ``s`` is not valid."""
    from smilesfix.smiles.chem import validate

    if not validate(s).valid:
        return None
    try:
        return canonicalize(parse(s))
    except (SmilesSyntaxError, InvalidGraph):
        return None


__all__ = [
    "AROMATIC", "atom_invariants", "canonical_smiles", "canonical_string",
    "canonicalize", "refine_ranks", "write_smiles",
]
