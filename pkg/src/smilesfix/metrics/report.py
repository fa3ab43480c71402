"""Set-level metrics and the JSON metrics report."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence, TextIO

import numpy as np

from smilesfix.metrics.descriptors import descriptor_vector
from smilesfix.metrics.distribution import GaussianSummary, frechet_distance, kde_1d, pca_project, scott_bandwidth
from smilesfix.metrics.fingerprints import Fingerprint, morgan_fingerprint, snn
from smilesfix.metrics.scaffolds import scaffold_of_smiles
from smilesfix.smiles.canonical import canonical_smiles
from smilesfix.smiles.chem import validate
from smilesfix.smiles.graph import parse


def uniqueness_at_k(samples: Sequence[str], k: int | None = None) -> float:
    """Distinct canonical forms / valid count over the first ``k`` samples (0 if none valid)."""
    head = samples if k is None else samples[:k]
    canon = [canonical_smiles(s) for s in head]
    valid = [c for c in canon if c is not None]
    if not valid:
        return 0.0
    return len(set(valid)) / len(valid)


class ReferenceSet:
    """Precomputed fingerprints, embedding summary and scaffolds of a reference set."""

    def __init__(self, smiles: Sequence[str], embedding: Callable = descriptor_vector,
                 radius: int = 2, nbits: int = 2048):
        self.smiles = [s for s in smiles if validate(s).valid]
        if not self.smiles:
            raise ValueError("reference set has no valid molecules")
        graphs = [parse(s) for s in self.smiles]
        self.radius, self.nbits = radius, nbits
        self.fingerprints: list[Fingerprint] = [morgan_fingerprint(g, radius, nbits) for g in graphs]
        self.embedding = embedding
        self.summary = GaussianSummary.fit(np.stack([embedding(g) for g in graphs]))
        self.scaffolds = {scaffold_of_smiles(s) for s in self.smiles}

    def __len__(self) -> int:
        return len(self.smiles)


@dataclass
class MetricsReport:
    n_samples: int
    n_valid: int
    validity: float
    unique_k: int
    unique_at_k: float
    snn: float | None = None
    frechet: float | None = None
    scaffold_novelty: float | None = None
    correction_rate: float | None = None
    n_previously_invalid: int | None = None
    n_corrected: int | None = None
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


_FRACTION = {"type": ["number", "null"], "minimum": 0, "maximum": 1}
_COUNT = {"type": "integer", "minimum": 0}

METRICS_REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "MetricsReport",
    "type": "object",
    "additionalProperties": False,
    "required": ["n_samples", "n_valid", "validity", "unique_k", "unique_at_k", "snn",
                 "frechet", "scaffold_novelty", "correction_rate", "n_previously_invalid",
                 "n_corrected", "flags"],
    "properties": {
        "n_samples": _COUNT,
        "n_valid": _COUNT,
        "validity": {"type": "number", "minimum": 0, "maximum": 1},
        "unique_k": _COUNT,
        "unique_at_k": {"type": "number", "minimum": 0, "maximum": 1},
        "snn": _FRACTION,
        "frechet": {"type": ["number", "null"], "minimum": 0},
        "scaffold_novelty": _FRACTION,
        "correction_rate": _FRACTION,
        "n_previously_invalid": {"type": ["integer", "null"], "minimum": 0},
        "n_corrected": {"type": ["integer", "null"], "minimum": 0},
        "flags": {"type": "array", "items": {"type": "string"}},
    },
}


def compute_report(samples: Sequence[str], reference: ReferenceSet | Sequence[str] | None = None,
                   scaffold_reference: ReferenceSet | Sequence[str] | None = None,
                   k: int | None = None) -> MetricsReport:
    """Validity, unique@k and, against ``reference``, SNN / Fréchet / scaffold novelty."""
    if reference is not None and not isinstance(reference, ReferenceSet):
        reference = ReferenceSet(reference)
    if scaffold_reference is None:
        scaffold_reference = reference
    elif not isinstance(scaffold_reference, ReferenceSet):
        scaffold_reference = ReferenceSet(scaffold_reference)

    samples = list(samples)
    valid = [s for s in samples if validate(s).valid]
    k_used = len(samples) if k is None else min(k, len(samples))
    rep = MetricsReport(
        n_samples=len(samples),
        n_valid=len(valid),
        validity=len(valid) / len(samples) if samples else 0.0,
        unique_k=k_used,
        unique_at_k=uniqueness_at_k(samples, k_used),
    )
    if not valid:
        rep.flags.append("no_valid_samples")
        return rep
    if reference is not None:
        fps = [morgan_fingerprint(parse(s), reference.radius, reference.nbits) for s in valid]
        rep.snn = snn(fps, reference.fingerprints)
        emb = np.stack([reference.embedding(parse(s)) for s in valid])
        rep.frechet = frechet_distance(GaussianSummary.fit(emb), reference.summary)
        if len(valid) < 2:
            rep.flags.append("single_valid_sample_covariance_zero")
    if scaffold_reference is not None:
        rep.scaffold_novelty = sum(
            1 for s in valid if scaffold_of_smiles(s) not in scaffold_reference.scaffolds
        ) / len(valid)
    return rep


def distribution_tables(sets: Mapping[str, Sequence[str]], grid_points: int = 200,
                        embedding: Callable = descriptor_vector):
    """First-principal-component projections and KDE curves per named set.

    PCA is fitted on the union of all valid molecules (descriptors
    standardized), then each set is projected and smoothed on a shared grid.
    Returns (projection rows, kde rows, explained variance ratio).
    """
    names, blocks = [], []
    for name, smiles in sets.items():
        vecs = [embedding(parse(s)) for s in smiles if validate(s).valid]
        if vecs:
            names.append(name)
            blocks.append(np.stack(vecs))
    allv = np.concatenate(blocks)
    scale = allv.std(axis=0)
    scale[scale == 0] = 1.0
    mu = allv.mean(axis=0)
    pca = pca_project((allv - mu) / scale, dims=1)
    projected = [pca.transform((b - mu) / scale)[:, 0] for b in blocks]
    span = np.concatenate(projected)
    bws = [scott_bandwidth(p) for p in projected]
    lo, hi = span.min() - 4 * max(bws), span.max() + 4 * max(bws)
    grid = np.linspace(lo, hi, grid_points)
    proj_rows = [(n, i, float(v)) for n, p in zip(names, projected) for i, v in enumerate(p)]
    kde_rows = [
        (n, float(x), float(d))
        for n, p, bw in zip(names, projected, bws)
        for x, d in zip(grid, kde_1d(p, bw, grid))
    ]
    return proj_rows, kde_rows, pca.explained_variance_ratio


def write_distribution_csvs(sets: Mapping[str, Sequence[str]], proj_fh: TextIO, kde_fh: TextIO,
                            grid_points: int = 200) -> None:
    proj_rows, kde_rows, _ = distribution_tables(sets, grid_points)
    w = csv.writer(proj_fh, lineterminator="\n")
    w.writerow(["set", "index", "pc1"])
    w.writerows((n, i, repr(v)) for n, i, v in proj_rows)
    w = csv.writer(kde_fh, lineterminator="\n")
    w.writerow(["set", "grid", "density"])
    w.writerows((n, repr(x), repr(d)) for n, x, d in kde_rows)


def finite_or_none(x: float | None) -> float | None:
    return None if x is None or not math.isfinite(x) else x
