"""Bemis-Murcko scaffolds and scaffold novelty."""

from __future__ import annotations

import functools
from typing import Iterable, Sequence

from smilesfix.errors import EmptySet, InvalidGraph
from smilesfix.smiles.canonical import canonical_string
from smilesfix.smiles.chem import verdict_for_graph
from smilesfix.smiles.graph import DOUBLE, MolGraph, parse


def murcko_scaffold(g: MolGraph) -> MolGraph:
    """Ring systems plus linkers; side chains stripped.

    Degree-1 non-ring atoms are removed until none remain. As in common
    toolkits, an atom joined to the remaining core by a double bond is then
    put back (keeps ``C=O`` on rings, so aromatic systems stay kekulizable),
    and an aromatic nitrogen that lost its substituent gains one hydrogen.
    Acyclic input gives the empty graph.

    Raises:
        InvalidGraph: ``g`` does not pass the validity checks.
    """
    v = verdict_for_graph(g)
    if not v.valid:
        raise InvalidGraph(f"{v.failure_class}: {v.detail}")
    adj = g.adjacency
    ring = g.ring_membership
    alive = [e != "H" for e in g.elements]
    deg = [sum(1 for b in adj[a] if alive[b]) for a in range(g.n_atoms)]
    stack = [a for a in range(g.n_atoms) if alive[a] and not ring[a] and deg[a] <= 1]
    while stack:
        a = stack.pop()
        if not alive[a]:
            continue
        alive[a] = False
        for b in adj[a]:
            if alive[b]:
                deg[b] -= 1
                if not ring[b] and deg[b] <= 1:
                    stack.append(b)
    if not any(ring[a] and alive[a] for a in range(g.n_atoms)):
        return MolGraph([], [], [], [], [], [])
    core = [a for a in range(g.n_atoms) if alive[a]]
    extra = [
        a for a in range(g.n_atoms)
        if not alive[a] and g.elements[a] != "H"
        and any(alive[b] and g.bonds[k].order == DOUBLE for b, k in adj[a].items())
    ]
    keep = sorted(core + extra)
    kept = set(keep)
    out = g.subgraph(keep)
    for n, a in enumerate(keep):
        if g.aromatic[a] and g.elements[a] == "N" and out.explicit_h[n] == 0:
            if any(b not in kept and g.elements[b] != "H" for b in adj[a]):
                out.explicit_h[n] = 1
    # hydrogens folded from removed [H] atoms were never kept as atoms; drop
    # explicit H on non-bracket atoms so implicit filling decides.
    for n, a in enumerate(keep):
        if not g.bracket[a] and not (g.aromatic[a] and g.elements[a] == "N"):
            out.explicit_h[n] = 0
    return out


def scaffold_string(g: MolGraph) -> str:
    """Canonical string of the scaffold; ``""`` for acyclic molecules."""
    return canonical_string(murcko_scaffold(g))


@functools.lru_cache(maxsize=131072)
def scaffold_of_smiles(s: str) -> str:
    return scaffold_string(parse(s))


def _key(x) -> str:
    return scaffold_of_smiles(x) if isinstance(x, str) else scaffold_string(x)


def scaffold_set(mols: Iterable) -> set[str]:
    return {_key(m) for m in mols}


def scaffold_novelty(gen: Sequence, ref: Sequence) -> float:
    """Fraction of ``gen`` whose scaffold does not occur among ``ref`` scaffolds."""
    if not gen:
        raise EmptySet("scaffold novelty needs generated molecules")
    ref_keys = scaffold_set(ref)
    return sum(1 for m in gen if _key(m) not in ref_keys) / len(gen)
