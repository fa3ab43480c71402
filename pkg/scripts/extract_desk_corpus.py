"""Cut a seeded desk-scale slice out of the MOSES training split.

The MOSES CSVs ship inside the ``molsets`` wheel. This script only needs the
wheel file, not an installed ``moses`` package:

    pip download molsets==0.3.1 --no-deps -d /tmp/dl
    python scripts/extract_desk_corpus.py /tmp/dl/molsets-0.3.1-py3-none-any.whl data/desk_corpus.smi
"""

import argparse
import csv
import gzip
import io
import random
import zipfile


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("wheel")
    ap.add_argument("out")
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--seed", type=int, default=20240917)
    args = ap.parse_args()

    with zipfile.ZipFile(args.wheel) as zf:
        raw = zf.read("moses/dataset/data/train.csv.gz")
    text = gzip.decompress(raw).decode("utf-8")
    rows = list(csv.DictReader(io.StringIO(text)))
    smiles = [r["SMILES"] for r in rows]

    rng = random.Random(args.seed)
    picked = rng.sample(range(len(smiles)), args.n)
    picked.sort()

    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("# MOSES train split (molsets 0.3.1, MIT licence)\n")
        fh.write(f"# seeded sample: n={args.n} seed={args.seed} of {len(smiles)} rows\n")
        for i in picked:
            fh.write(smiles[i] + "\n")


if __name__ == "__main__":
    main()
