"""Cheap graph descriptors used as the default molecule embedding."""

from __future__ import annotations

import numpy as np

from smilesfix.errors import InvalidGraph
from smilesfix.smiles.chem import total_hydrogens, verdict_for_graph
from smilesfix.smiles.graph import DOUBLE, TRIPLE, MolGraph, parse

ATOMIC_WEIGHT = {
    "C": 12.011, "N": 14.007, "O": 15.999, "S": 32.06,
    "F": 18.998, "Cl": 35.45, "Br": 79.904, "H": 1.008,
}
HALOGENS = frozenset({"F", "Cl", "Br"})

DESCRIPTOR_NAMES = (
    "heavy_atoms", "aromatic_atoms", "ring_count", "mol_weight",
    "heteroatoms", "halogens", "multiple_bonds", "branch_points",
)


def descriptor_vector(g: MolGraph | str) -> np.ndarray:
    """8 descriptors in :data:`DESCRIPTOR_NAMES` order (float64)."""
    if isinstance(g, str):
        g = parse(g)
    v = verdict_for_graph(g)
    if not v.valid:
        raise InvalidGraph(f"{v.failure_class}: {v.detail}")
    hs = total_hydrogens(g)
    heavy = [a for a, e in enumerate(g.elements) if e != "H"]
    weight = sum(ATOMIC_WEIGHT[g.elements[a]] for a in heavy) + ATOMIC_WEIGHT["H"] * sum(hs)
    return np.array([
        len(heavy),
        sum(g.aromatic),
        g.cycle_rank(),
        weight,
        sum(1 for a in heavy if g.elements[a] != "C"),
        sum(1 for a in heavy if g.elements[a] in HALOGENS),
        sum(1 for b in g.bonds if b.order in (DOUBLE, TRIPLE)),
        sum(1 for a in heavy if g.degree(a) >= 3),
    ], dtype=np.float64)


def descriptor_matrix(mols) -> np.ndarray:
    rows = [descriptor_vector(m) for m in mols]
    if not rows:
        return np.zeros((0, len(DESCRIPTOR_NAMES)))
    return np.stack(rows)
