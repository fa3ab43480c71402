"""Circular (Morgan-style) fingerprints, Tanimoto similarity and SNN."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from smilesfix.errors import EmptySet, InvalidGraph, WidthMismatch
from smilesfix.smiles.chem import total_hydrogens, verdict_for_graph
from smilesfix.smiles.graph import MolGraph, parse

_MASK64 = (1 << 64) - 1
_ELEMENT_CODE = {"C": 6, "N": 7, "O": 8, "F": 9, "S": 16, "Cl": 17, "Br": 35, "H": 1}


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def hash_ints(values: Iterable[int]) -> int:
    h = 0x243F6A8885A308D3
    for v in values:
        h = splitmix64(h ^ (v & _MASK64))
    return h


@dataclass(frozen=True)
class Fingerprint:
    on_bits: frozenset[int]
    nbits: int = 2048
    radius: int = 2

    def popcount(self) -> int:
        return len(self.on_bits)

    def to_array(self) -> np.ndarray:
        arr = np.zeros(self.nbits, dtype=np.uint8)
        if self.on_bits:
            arr[list(self.on_bits)] = 1
        return arr


def morgan_fingerprint(g: MolGraph, radius: int = 2, nbits: int = 2048) -> Fingerprint:
    """Hashed circular fingerprint.

    Radius-0 identifiers come from (element, aromatic, degree, total H, ring flag);
    each further iteration hashes the previous identifier with the sorted
    (bond order, neighbour identifier) pairs.

    Raises:
        InvalidGraph: ``g`` does not pass the validity checks.
    """
    v = verdict_for_graph(g)
    if not v.valid:
        raise InvalidGraph(f"{v.failure_class}: {v.detail}")
    hs = total_hydrogens(g)
    ring = g.ring_membership
    adj = g.adjacency
    ids = [
        hash_ints((_ELEMENT_CODE[g.elements[a]], int(g.aromatic[a]), g.degree(a), hs[a], int(ring[a])))
        for a in range(g.n_atoms)
    ]
    bits = {i % nbits for i in ids}
    for r in range(1, radius + 1):
        ids = [
            hash_ints((r, ids[a], *[x for pair in sorted((g.bonds[k].order, ids[b]) for b, k in adj[a].items()) for x in pair]))
            for a in range(g.n_atoms)
        ]
        bits.update(i % nbits for i in ids)
    return Fingerprint(frozenset(bits), nbits, radius)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """|a & b| / |a | b|; 1.0 when both are empty."""
    if a.nbits != b.nbits:
        raise WidthMismatch(f"{a.nbits} vs {b.nbits} bits")
    union = len(a.on_bits | b.on_bits)
    if union == 0:
        return 1.0
    return len(a.on_bits & b.on_bits) / union


def _as_fingerprint(x, radius: int, nbits: int) -> Fingerprint:
    if isinstance(x, Fingerprint):
        return x
    if isinstance(x, str):
        x = parse(x)
    return morgan_fingerprint(x, radius, nbits)


def fingerprint_matrix(fps: Sequence[Fingerprint]) -> np.ndarray:
    return np.stack([fp.to_array() for fp in fps]).astype(np.float64)


def nearest_similarities(gen: Sequence, ref: Sequence, radius: int = 2, nbits: int = 2048,
                         chunk: int = 2048) -> np.ndarray:
    """Per generated molecule, the max Tanimoto to any reference molecule."""
    if not gen or not ref:
        raise EmptySet("snn needs non-empty generated and reference sets")
    g_fps = [_as_fingerprint(x, radius, nbits) for x in gen]
    r_fps = [_as_fingerprint(x, radius, nbits) for x in ref]
    widths = {fp.nbits for fp in g_fps} | {fp.nbits for fp in r_fps}
    if len(widths) != 1:
        raise WidthMismatch(f"mixed fingerprint widths {sorted(widths)}")
    A = fingerprint_matrix(g_fps)
    a_cnt = A.sum(axis=1)
    best = np.zeros(len(g_fps))
    for start in range(0, len(r_fps), chunk):
        B = fingerprint_matrix(r_fps[start:start + chunk])
        inter = A @ B.T
        union = a_cnt[:, None] + B.sum(axis=1)[None, :] - inter
        with np.errstate(invalid="ignore", divide="ignore"):
            sim = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 1.0)
        np.maximum(best, sim.max(axis=1), out=best)
    return best


def snn(gen: Sequence, ref: Sequence, radius: int = 2, nbits: int = 2048) -> float:
    """Mean nearest-neighbour Tanimoto similarity of ``gen`` against ``ref``.

    Items may be MolGraph, SMILES strings or precomputed fingerprints.
    """
    return float(np.mean(nearest_similarities(gen, ref, radius, nbits)))
