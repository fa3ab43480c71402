import csv
import os
from pathlib import Path

import pytest
import torch
from hypothesis import HealthCheck, settings

ROOT = Path(__file__).resolve().parents[1]
DATA = Path(__file__).resolve().parent / "data"
CORPUS = ROOT / "data" / "desk_corpus.smi"

torch.set_num_threads(1)

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], max_examples=100
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def read_csv(name):
    with open(DATA / name, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="session")
def validity_oracle():
    return read_csv("validity_oracle.csv")


@pytest.fixture(scope="session")
def scaffold_oracle():
    return read_csv("scaffold_oracle.csv")


@pytest.fixture(scope="session")
def corpus():
    from smilesfix.data import read_smiles

    return read_smiles(CORPUS)


@pytest.fixture(scope="session")
def corpus_slice(corpus):
    """First 2,000 accepted molecules."""
    from smilesfix.smiles.chem import is_valid

    return [s for s in corpus[:2200] if is_valid(s)][:2000]


def pytest_terminal_summary(terminalreporter):
    from acceptance_registry import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
