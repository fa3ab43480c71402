"""Freeze Bemis-Murcko scaffolds computed by RDKit for a corpus sample.

The CSV holds the input SMILES and RDKit's scaffold SMILES; the tests parse
the latter with the package's own reader and compare canonical strings.
Needs ``rdkit`` (``pip install .[oracle]``).

    python scripts/build_scaffold_oracle.py data/desk_corpus.smi tests/data/scaffold_oracle.csv
"""

import argparse
import csv
import random

from rdkit import Chem, RDLogger
from rdkit.Chem.Scaffolds import MurckoScaffold

RDLogger.DisableLog("rdApp.*")

EDGE_CASES = [
    "CCCC", "C1CCCCC1", "CC1CCCCC1", "O=c1cccc[nH]1", "Cn1cccc1", "C1CC1CC(=O)C1CC1",
    "CS(=O)(=O)c1ccccc1", "C=C1CCCCC1", "c1ccccc1Cc1ccccc1", "O=C1CCCN1C",
]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("corpus")
    ap.add_argument("out")
    ap.add_argument("--n", type=int, default=190)
    ap.add_argument("--seed", type=int, default=11)
    args = ap.parse_args()
    corpus = [l.strip() for l in open(args.corpus) if l.strip() and not l.startswith("#")]
    cases = EDGE_CASES + random.Random(args.seed).sample(corpus, args.n)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["smiles", "rdkit_scaffold"])
        for s in cases:
            w.writerow([s, MurckoScaffold.MurckoScaffoldSmiles(mol=Chem.MolFromSmiles(s))])


if __name__ == "__main__":
    main()
