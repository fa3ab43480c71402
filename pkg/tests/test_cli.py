"""Subcommands end to end on a small slice: exit codes, config echo, reruns and resume."""

import csv
import json

import jsonschema
import pytest

from conftest import CORPUS
from smilesfix import __version__
from smilesfix.cli import DEFAULTS, run
from smilesfix.data import read_pairs, read_smiles
from smilesfix.fixer import read_outcomes_csv
from smilesfix.metrics.report import METRICS_REPORT_SCHEMA, ReferenceSet, compute_report


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("ingest") / "data"
    assert run(["ingest", str(CORPUS), "--out", str(out), "--limit", "300", "--heldout-corruptions", "40"]) == 0
    return out


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ------------------------------------------------------------------ ingest and config
def test_ingest_outputs(data_dir):
    man = json.loads((data_dir / "manifest.json").read_text())
    assert man["accepted"] == 300
    sizes = man["split_sizes"]
    for name in ("train", "test", "scaffold_test"):
        assert len(read_smiles(data_dir / f"{name}.smi")) == sizes[name]
    assert sizes["train"] + sizes["test"] + sizes["scaffold_test"] == 300
    pairs = read_pairs(data_dir / "heldout_corrupted.jsonl", strict=True)
    assert len(pairs) == sizes["heldout_corrupted"] > 0
    test = set(read_smiles(data_dir / "test.smi"))
    assert all(p.valid in test for p in pairs)


def test_config_echo(data_dir):
    echo = json.loads((data_dir / "config.json").read_text())
    assert echo["version"] == __version__ and echo["stage"] == "ingest"
    assert echo["config"]["ingest"]["limit"] == 300
    assert set(echo["config"]) == set(DEFAULTS)


def test_ingest_same_seed_identical(tmp_path, data_dir):
    out = tmp_path / "again"
    assert run(["ingest", str(CORPUS), "--out", str(out), "--limit", "300", "--heldout-corruptions", "40"]) == 0
    for name in ("train.smi", "test.smi", "scaffold_test.smi", "heldout_corrupted.jsonl", "manifest.json"):
        assert (out / name).read_bytes() == (data_dir / name).read_bytes()


def test_missing_corpus_exit_1(tmp_path, capsys):
    assert run(["ingest", str(tmp_path / "nope.smi"), "--out", str(tmp_path / "o")]) == 1
    assert "nope.smi" in capsys.readouterr().err


def test_unknown_config_key_exit_2(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("train_gen:\n  epochs: 2\n  warp_factor: 9\n")
    assert run(["train-gen", "--config", str(cfg), "--data", "x", "--out", str(tmp_path / "o")]) == 2
    cfg.write_text("colour: blue\n")
    assert run(["eval", "--config", str(cfg)]) == 2


def test_missing_required_setting_exit_2(tmp_path):
    assert run(["ingest", str(CORPUS)]) == 2


def test_flags_override_config_file(tmp_path, data_dir):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("seed: 7\neval:\n  k: 3\n")
    ref = data_dir / "test.smi"
    out = tmp_path / "e"
    assert run(["eval", "--config", str(cfg), "--gen", str(ref), "--ref", str(ref), "--out", str(out),
                "--k", "5"]) == 0
    echo = json.loads((out / "config.json").read_text())["config"]
    assert echo["seed"] == 7 and echo["eval"]["k"] == 5


# ------------------------------------------------------------------ eval
def test_eval_self_comparison(tmp_path, data_dir):
    ref = data_dir / "test.smi"
    out = tmp_path / "e"
    assert run(["eval", "--gen", str(ref), "--ref", str(ref), "--out", str(out)]) == 0
    m = json.loads((out / "metrics.json").read_text())
    jsonschema.validate(m, METRICS_REPORT_SCHEMA)
    assert m["snn"] == pytest.approx(1.0, abs=1e-12)
    assert m["frechet"] == pytest.approx(0.0, abs=1e-6)
    assert m["scaffold_novelty"] == 0.0
    assert rows(out / "pca.csv")[0][0] and rows(out / "kde.csv")


def test_eval_matches_module_call(tmp_path, data_dir):
    gen, ref = data_dir / "scaffold_test.smi", data_dir / "train.smi"
    out = tmp_path / "e"
    assert run(["eval", "--gen", str(gen), "--ref", str(ref), "--out", str(out)]) == 0
    m = json.loads((out / "metrics.json").read_text())
    direct = compute_report(read_smiles(gen), ReferenceSet(read_smiles(ref))).to_dict()
    for k in ("validity", "snn", "frechet", "scaffold_novelty", "unique_at_k"):
        assert m[k] == pytest.approx(direct[k], abs=1e-12)


def test_eval_byte_identical_reruns(tmp_path, data_dir):
    args = ["--gen", str(data_dir / "scaffold_test.smi"), "--ref", str(data_dir / "train.smi"),
            "--extra", str(data_dir / "test.smi"), "--dtype", "float64"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["eval", *args, "--out", str(a)]) == 0
    assert run(["eval", *args, "--out", str(b)]) == 0
    for name in ("metrics.json", "pca.csv", "kde.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    # the echoed configs differ only in the output path
    ca, cb = (json.loads((d / "config.json").read_text()) for d in (a, b))
    ca["config"]["eval"]["out"] = cb["config"]["eval"]["out"]
    assert ca == cb


def test_eval_empty_input_exit_2(tmp_path, data_dir):
    empty = tmp_path / "empty.smi"
    empty.write_text("\n")
    assert run(["eval", "--gen", str(empty), "--ref", str(data_dir / "test.smi"), "--out", str(tmp_path / "o")]) == 2


# ------------------------------------------------------------------ generator stages
GEN_FLAGS = ["--epochs", "2", "--gate-samples", "10", "--harvest-limit", "16", "--dtype", "float64"]


def test_collect_without_generator(tmp_path):
    (tmp_path / "run").mkdir()
    assert run(["collect", "--run", str(tmp_path / "run"), "--out", str(tmp_path / "p")]) == 1


def test_train_gen_resume_matches_straight_run(tmp_path, data_dir):
    straight, split = tmp_path / "straight", tmp_path / "split"
    assert run(["train-gen", "--data", str(data_dir), "--out", str(straight), *GEN_FLAGS]) == 0
    assert run(["train-gen", "--data", str(data_dir), "--out", str(split), *GEN_FLAGS, "--max-steps", "3"]) == 0
    assert len(rows(split / "loss.csv")) == 1 + 3
    assert run(["train-gen", "--data", str(data_dir), "--out", str(split), *GEN_FLAGS, "--resume"]) == 0

    a, b = rows(straight / "loss.csv"), rows(split / "loss.csv")
    n_train = len(read_smiles(data_dir / "train.smi"))
    assert len(a) - 1 == 2 * -(-n_train // 32)  # one row per step
    assert len(a) == len(b)
    for ra, rb in zip(a[1:], b[1:]):
        assert [float(x) for x in ra] == pytest.approx([float(x) for x in rb], abs=1e-6)

    gates = rows(straight / "gates.csv")
    assert gates[0][:3] == ["epoch", "n_samples", "validity"] and len(gates) == 3
    for r in read_pairs(straight / "pairs" / "epoch_001.jsonl", strict=True):
        assert r.check() is None

    # a disabled gate always collects; the recorded default gate rejects an untrained model
    out = tmp_path / "collected"
    assert run(["collect", "--run", str(straight), "--out", str(out), "--v-min", "0", "--f-max", "inf"]) == 0
    info = json.loads((out / "collect.json").read_text())
    assert info["epochs_used"] == [0, 1]
    assert run(["collect", "--run", str(straight), "--out", str(tmp_path / "c2"), "--v-min", "1.01"]) == 2


# ------------------------------------------------------------------ fixer stages
@pytest.fixture(scope="module")
def fixer_run(tmp_path_factory, data_dir):
    root = tmp_path_factory.mktemp("fixer")
    pre, fine = root / "pre", root / "fine"
    assert run(["pretrain", "--data", str(data_dir), "--out", str(pre), "--epochs", "1", "--max-steps", "4"]) == 0
    assert run(["finetune", "--pretrained", str(pre), "--pairs", str(data_dir / "heldout_corrupted.jsonl"),
                "--out", str(fine), "--epochs", "5", "--max-steps", "3"]) == 0
    return pre, fine


def test_fixer_loss_csv_rows(fixer_run):
    pre, fine = fixer_run
    assert len(rows(pre / "loss.csv")) == 1 + 4
    assert len(rows(fine / "loss.csv")) == 1 + 3


def test_pretrain_resume_next_step_loss(tmp_path, data_dir):
    common = ["--data", str(data_dir), "--epochs", "1", "--dtype", "float64", "--batch-size", "16"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["pretrain", *common, "--out", str(a), "--max-steps", "4"]) == 0
    assert run(["pretrain", *common, "--out", str(b), "--max-steps", "2"]) == 0
    assert run(["pretrain", *common, "--out", str(b), "--max-steps", "4", "--resume"]) == 0
    la, lb = rows(a / "loss.csv"), rows(b / "loss.csv")
    assert len(la) == len(lb) == 5
    assert float(lb[3][5]) == pytest.approx(float(la[3][5]), abs=1e-6)
    assert float(lb[4][5]) == pytest.approx(float(la[4][5]), abs=1e-6)


def test_finetune_missing_pretrained(tmp_path, data_dir):
    assert run(["finetune", "--pretrained", str(tmp_path / "none"), "--pairs",
                str(data_dir / "heldout_corrupted.jsonl"), "--out", str(tmp_path / "f")]) == 1


def test_fix_summary_matches_csv(tmp_path, fixer_run, data_dir):
    _, fine = fixer_run
    inp = tmp_path / "in.smi"
    inp.write_text("CCO\nC1CC\nc1ccccc1\nCC(\n")
    out = tmp_path / "fix"
    code = run(["fix", str(inp), "--checkpoint", str(fine), "--out", str(out), "--beam", "2", "--samples", "2",
                "--reference", str(data_dir / "train.smi")])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    with open(out / "outcomes.csv") as fh:
        outcomes = read_outcomes_csv(fh)
    assert [o["input"] for o in outcomes] == ["CCO", "C1CC", "c1ccccc1", "CC("]
    n_prev = sum(o["status"] != "already_valid" for o in outcomes)
    n_fixed = sum(o["status"] == "corrected" for o in outcomes)
    after = summary["after"]
    assert after["n_previously_invalid"] == n_prev == 2
    assert after["n_corrected"] == n_fixed
    assert after["correction_rate"] == pytest.approx(n_fixed / n_prev)
    assert summary["before"]["validity"] == 0.5
    assert after["validity"] == pytest.approx((2 + n_fixed) / 4)


def test_fix_empty_file_exit_2(tmp_path, fixer_run):
    empty = tmp_path / "e.smi"
    empty.write_text("")
    assert run(["fix", str(empty), "--checkpoint", str(fixer_run[1]), "--out", str(tmp_path / "o")]) == 2


def test_fix_stdin_mode(monkeypatch, capsys, fixer_run):
    import io

    monkeypatch.setattr("sys.stdin", io.StringIO("CCO\n\nC1CC\nc1ccccc1\n"))
    assert run(["fix", "--stdin", "--checkpoint", str(fixer_run[1]), "--beam", "0", "--samples", "0"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3
    assert lines[0] == "CCO" and lines[2] == "c1ccccc1"


def test_ablate_rows_and_resume(tmp_path, data_dir, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("ablate:\n  beam: 0\n  samples: 0\n  batch_size: 64\n")
    common = ["ablate", "--config", str(cfg), "--data", str(data_dir), "--pairs",
              str(data_dir / "heldout_corrupted.jsonl"), "--eval-size", "3", "--pretrain-epochs", "1",
              "--finetune-epochs", "1", "--out", str(tmp_path / "abl")]
    assert run([*common, "--ratios", "0.2"]) == 0
    first = rows(tmp_path / "abl" / "ablation.csv")
    assert len(first) == 2 and float(first[1][0]) == 0.2
    capsys.readouterr()
    assert run([*common, "--ratios", "0.3", "0.2"]) == 0
    printed = capsys.readouterr().out
    assert "ratio 0.30" in printed and "ratio 0.20" not in printed  # 0.2 reused
    table = rows(tmp_path / "abl" / "ablation.csv")
    assert [float(r[0]) for r in table[1:]] == [0.3, 0.2]
    assert table[2] == first[1]
    for r in table[1:]:
        assert all(0.0 <= float(x) <= 100.0 for x in r[1:])
