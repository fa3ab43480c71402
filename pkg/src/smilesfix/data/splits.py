"""Scaffold-disjoint train/test/scaffold-test split."""

from __future__ import annotations

from collections import defaultdict
from typing import Sequence

import numpy as np

from smilesfix.errors import InsufficientScaffoldDiversity
from smilesfix.metrics.scaffolds import scaffold_of_smiles


def scaffold_split(molecules: Sequence[str], fractions=(0.8, 0.1, 0.1), seed: int = 0):
    """Split into (train, test, scaffold_test).

    Whole scaffold groups, in seeded random order, go to scaffold_test until
    its share is reached; the rest is shuffled and cut into train/test. So no
    scaffold_test scaffold occurs in train or test.

    Raises:
        ValueError: fractions do not sum to 1.
        InsufficientScaffoldDiversity: fewer than two scaffold classes.
    """
    f_train, f_test, f_scaf = fractions
    if abs(f_train + f_test + f_scaf - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError(f"fractions must be non-negative and sum to 1, got {fractions}")
    groups: dict[str, list[int]] = defaultdict(list)
    for i, s in enumerate(molecules):
        groups[scaffold_of_smiles(s)].append(i)
    if len(groups) < 2:
        raise InsufficientScaffoldDiversity(f"only {len(groups)} scaffold class(es)")

    rng = np.random.default_rng(seed)
    keys = sorted(groups)
    order = rng.permutation(len(keys))
    target = int(round(f_scaf * len(molecules)))
    scaf_idx: list[int] = []
    held = set()
    for k in order:
        if len(scaf_idx) >= target:
            break
        members = groups[keys[k]]
        # never hand out the last remaining scaffold class
        if len(held) + 1 >= len(keys):
            break
        if len(scaf_idx) + len(members) > target and scaf_idx and target - len(scaf_idx) < len(members) / 2:
            continue
        held.add(keys[k])
        scaf_idx.extend(members)
    rest = [i for i in range(len(molecules)) if scaffold_of_smiles(molecules[i]) not in held]
    rest = [rest[j] for j in rng.permutation(len(rest))]
    n_test = int(round(f_test / max(f_train + f_test, 1e-12) * len(rest))) if f_train + f_test else 0
    test = sorted(rest[:n_test])
    train = sorted(rest[n_test:])
    pick = lambda idx: [molecules[i] for i in idx]  # noqa: E731
    return pick(train), pick(test), pick(sorted(scaf_idx))
