"""Freeze the 200-case validity oracle set with RDKit verdicts.

Run once, before touching the parser; the CSV it writes is what the test
suite compares against. Needs ``rdkit`` (``pip install .[oracle]``).

    python scripts/build_validity_oracle.py data/desk_corpus.smi tests/data/validity_oracle.csv
"""

import argparse
import csv
import random
import re

from rdkit import Chem, RDLogger

RDLogger.DisableLog("rdApp.*")

TOKEN_RE = re.compile(r"Cl|Br|\[H\]|\[nH\]|[CcOoNnSsF123456\-=#()]")
ALPHABET = ["C", "c", "O", "o", "N", "n", "S", "s", "F", "Cl", "Br", "[nH]",
            "1", "2", "3", "4", "5", "6", "-", "=", "#", "(", ")"]

# Hand-picked edge cases of the restricted dialect.
CURATED = [
    "C1CCCCC1", "C1(C)CCCC1", "c1ccccc1c", "c1ccccc1", "c1ccc1", "FF", "C=O",
    "C(C)(C)(C)(C)C", "C1CCCCC", "C(C)O", "c1cc[nH]c1", "c1ccnc1", "Cn1cccc1",
    "O=c1cccc[nH]1", "c1=cc=cc=c1", "c1ccccc1-c1ccccc1", "c1ccccc1c1ccccc1",
    "[H]C", "C[H]C", "S(C)(C)(C)C", "S(C)(C)C", "CS(=O)(=O)C", "N(C)(C)(C)C",
    "C1=CC=CC=C1", "c1ccoc1", "c1ccsc1", "Cc1ccccc1=O", "C1CC2CCC1C2",
    "O=C1C=CC(=O)C=C1", "c1cnc[nH]1", "n1ccccc1", "c12ccccc1cccc2", "C#C",
    "C#N", "N#N", "O=O", "C=1C", "C1=CC1", "C(=O)=O", "C=C=C", "S=O",
    "c1ccs(=O)c1", "C=1CC1", "C1CC=1", "C-1CC1", "C1CC=1=C", "C12C3C1C23",
    "C1CC1)", "CC)", "C(C", "C1CC(", "C(", "C((C))", "C()C", "(C)C", "C=",
    "C-=C", "C11", "C1C1", "C12CC12", "c1cccc1", "C(C)1CC1", "C1CC(C1)",
    "=CC", "1CC1", "CC(=)C", "CC(C)(C)(C)C", "O=N(=O)C", "c1ccc2[nH]ccc2c1",
    "Clc1ccccc1Br", "CCN(CC)CC", "N#CC#N", "OO", "C#CC#C", "CS(C)(=O)=O",
    "FC(F)(F)F", "BrBr", "ClCl", "C(F)(F)(F)(F)F", "O(C)(C)C", "c1ccnn1",
    "c1cn[nH]c1",
]


def rdkit_valid(smiles):
    return Chem.MolFromSmiles(smiles) is not None


def corrupt(smiles, rng):
    toks = TOKEN_RE.findall(smiles)
    for _ in range(rng.randint(1, 3)):
        kind = rng.choice(["sub", "del", "ins"])
        i = rng.randrange(len(toks))
        if kind == "sub":
            toks[i] = rng.choice(ALPHABET)
        elif kind == "del" and len(toks) > 1:
            del toks[i]
        else:
            toks.insert(i, rng.choice(ALPHABET))
    return "".join(toks)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("corpus")
    ap.add_argument("out")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    rng = random.Random(args.seed)

    corpus = [l.strip() for l in open(args.corpus) if l.strip() and not l.startswith("#")]
    cases = list(dict.fromkeys(CURATED))
    n_clean = (200 - len(cases)) // 2
    for s in rng.sample(corpus, n_clean):
        cases.append(s)
    seen = set(cases)
    while len(cases) < 200:
        s = corrupt(rng.choice(corpus), rng)
        if s not in seen:
            seen.add(s)
            cases.append(s)

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["smiles", "rdkit_valid", "origin"])
        for i, s in enumerate(cases):
            origin = "curated" if i < len(CURATED) else ("corpus" if i < len(CURATED) + n_clean else "corrupted")
            w.writerow([s, int(rdkit_valid(s)), origin])


if __name__ == "__main__":
    main()
