"""Command-line entry point: one subcommand per pipeline stage.

Run directories always receive ``config.json`` (the resolved configuration
plus the package version). Exit codes: 0 success, 1 I/O or missing
artifact, 2 invalid input or configuration, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np
import torch
import yaml

from smilesfix import __version__
from smilesfix.errors import (
    CheckpointError, ConfigError, DegenerateData, EmptyCorpus, EmptyInput, EmptySet, InputTooLong,
    InsufficientScaffoldDiversity, MissingArtifact, NoEpochPassedGate, NonFiniteInput, NonFiniteLoss,
    SchemaError, SmilesFixError,
)

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3

# Every key a config file may set. Sections mirror the subcommands.
DEFAULTS: dict = {
    "seed": 0,
    "preset": "desk",
    "dtype": "float32",
    "ingest": {
        "corpus": None, "out": None, "limit": None, "max_len": 80,
        "fractions": [0.8, 0.1, 0.1], "heldout_corruptions": 1000, "min_edits": 1, "max_edits": 3,
    },
    "train_gen": {
        "data": None, "out": None, "epochs": 6, "batch_size": 32, "lr": 3e-4, "lr_min": 3e-5,
        "beta": 1.0, "beta_warmup": 0.1, "clip": 1.0, "gate_samples": 3000, "gate_temperature": 1.0,
        "v_min": 0.5, "f_max_factor": 2.0, "harvest_limit": None, "harvest_temperature": 0.0,
        "decode_batch": 256, "checkpoint_every": 0, "max_steps": None,
    },
    "collect": {"run": None, "out": None, "v_min": None, "f_max": None},
    "pretrain": {
        "data": None, "out": None, "epochs": 4, "batch_size": 32, "lr": 3e-4, "lr_min": 3e-5,
        "clip": 1.0, "mask_ratio": 0.10, "checkpoint_every": 0, "max_steps": None,
    },
    "finetune": {
        "pretrained": None, "pairs": None, "out": None, "epochs": 4, "batch_size": 32, "lr": 3e-4,
        "lr_min": 3e-5, "clip": 1.0, "checkpoint_every": 0, "max_steps": None,
    },
    "fix": {
        "checkpoint": None, "input": None, "out": None, "reference": None, "beam": 5, "samples": 8,
        "temperature": 0.7, "batch_size": 128, "k": None,
    },
    "eval": {"gen": None, "ref": None, "extra": [], "out": None, "k": None, "grid_points": 200},
    "ablate": {
        "data": None, "pairs": None, "eval_set": None, "out": None, "ratios": [0.05, 0.10, 0.15, 0.20, 0.30],
        "eval_size": 500, "pretrain_epochs": 2, "finetune_epochs": 2, "batch_size": 32, "lr": 3e-4,
        "lr_min": 3e-5, "beam": 5, "samples": 8, "temperature": 0.7,
    },
}

_SECTION_OF = {"ingest": "ingest", "train-gen": "train_gen", "collect": "collect", "pretrain": "pretrain",
               "finetune": "finetune", "fix": "fix", "eval": "eval", "ablate": "ablate"}


# ---------------------------------------------------------------- config
def _check_keys(d: dict, ref: dict, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    unknown = set(d) - set(ref)
    if unknown:
        raise ConfigError(f"unknown config keys in {where or 'top level'}: {sorted(unknown)}")
    for k, v in d.items():
        if isinstance(ref[k], dict):
            _check_keys(v, ref[k], f"{where}.{k}" if where else k)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config_file(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise MissingArtifact(path, "config") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON ({exc})") from None
    _check_keys(data, DEFAULTS, "")
    return data


def resolve_config(args: argparse.Namespace) -> dict:
    """defaults < config file < command-line flags."""
    cfg = copy.deepcopy(DEFAULTS)
    if getattr(args, "config", None):
        cfg = _merge(cfg, load_config_file(args.config))
    for key in ("seed", "preset", "dtype"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    section = _SECTION_OF[args.command]
    for k in DEFAULTS[section]:
        v = getattr(args, k, None)
        if v is not None:
            cfg[section][k] = v
    return cfg


def stage_seed(cfg: dict, stage: str) -> int:
    from smilesfix.nn.training import derive_seed

    return derive_seed(int(cfg["seed"]), stage)


def _need(cfg_section: dict, key: str, stage: str):
    v = cfg_section.get(key)
    if v in (None, ""):
        raise ConfigError(f"{stage}: '{key}' is required (flag or config file)")
    return v


def _require_file(path, stage: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingArtifact(p, stage)
    return p


def _prepare_out(path, cfg: dict, stage: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    echo = {"version": __version__, "stage": stage, "config": cfg}
    (out / "config.json").write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def _write_json(path: Path, obj) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    tmp.replace(path)


def _read_lines(path) -> list[str]:
    """Raw SMILES lines (blank lines dropped). Unlike corpus files, '#' starts a triple bond here."""
    with open(path, encoding="utf-8") as fh:
        return [ln.strip() for ln in fh if ln.strip()]


def _dtype(cfg: dict):
    from smilesfix.nn.training import torch_dtype

    try:
        return torch_dtype(cfg["dtype"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------- loss logging
LOSS_FIELDS = ("step", "l_mol", "l_kl", "l_prop", "beta", "total", "token_accuracy")


class LossLog:
    """Per-step CSV. On resume the file is cut back to the checkpointed step."""

    def __init__(self, path: Path, keep_steps: int):
        rows = []
        if keep_steps and path.exists():
            with open(path, encoding="utf-8") as fh:
                rows = list(csv.reader(fh))[1: keep_steps + 1]
        self.fh = open(path, "w", encoding="utf-8")
        self.w = csv.writer(self.fh, lineterminator="\n")
        self.w.writerow(LOSS_FIELDS)
        self.w.writerows(rows)

    def add(self, step: int, parts) -> None:
        d = parts.to_dict()
        self.w.writerow([step] + [repr(float(d[k])) for k in LOSS_FIELDS[1:]])

    def close(self) -> None:
        self.fh.close()


# ---------------------------------------------------------------- ingest
def cmd_ingest(cfg: dict) -> int:
    from smilesfix.data import CorruptionSpec, PairRecord, corrupt, load_corpus, scaffold_split, write_pairs, write_smiles

    c = cfg["ingest"]
    corpus = _need(c, "corpus", "ingest")
    out_dir = _need(c, "out", "ingest")
    if not Path(corpus).exists():
        raise MissingArtifact(corpus, "ingest")
    molecules, manifest = load_corpus(corpus, int(c["max_len"]), c["limit"])
    seed = stage_seed(cfg, "ingest")
    train, test, scaf = scaffold_split(molecules, tuple(c["fractions"]), seed)
    out = _prepare_out(out_dir, cfg, "ingest")
    write_smiles(out / "accepted.smi", molecules)
    write_smiles(out / "train.smi", train)
    write_smiles(out / "test.smi", test)
    write_smiles(out / "scaffold_test.smi", scaf)
    manifest.split_sizes = {"train": len(train), "test": len(test), "scaffold_test": len(scaf)}
    # Held-out synthetic corruptions of the test split, for correction experiments.
    n = min(int(c["heldout_corruptions"]), len(test))
    rng = np.random.default_rng(stage_seed(cfg, "ingest-corrupt"))
    spec = CorruptionSpec(int(c["min_edits"]), int(c["max_edits"]))
    pick = rng.permutation(len(test))[:n]
    records = []
    for i in sorted(pick):
        try:
            bad, _ = corrupt(test[i], spec, rng)
        except SmilesFixError:
            continue
        records.append(PairRecord(bad, test[i], 0, "synthetic", 1, [], "synthetic"))
    write_pairs(out / "heldout_corrupted.jsonl", records)
    manifest.split_sizes["heldout_corrupted"] = len(records)
    (out / "manifest.json").write_text(manifest.to_json() + "\n", encoding="utf-8")
    print(f"accepted {manifest.accepted}/{manifest.total}; train {len(train)}, test {len(test)}, "
          f"scaffold_test {len(scaf)}; {len(records)} held-out corruptions")
    return EXIT_OK


# ---------------------------------------------------------------- generator
def _split_file(data_dir, name: str, stage: str) -> list[str]:
    from smilesfix.data import read_smiles

    return read_smiles(_require_file(Path(data_dir) / name, stage))


def cmd_train_gen(cfg: dict, resume: bool = False) -> int:
    from smilesfix.data import write_pairs
    from smilesfix.generator import (
        GateReference, GeneratorTrainConfig, GeneratorTrainer, PropertyScaler, generator_config, property_values,
    )
    from smilesfix.nn.training import build_model, load_model, save_model

    c = cfg["train_gen"]
    data = _need(c, "data", "train-gen")
    train = _split_file(data, "train.smi", "train-gen")
    test = _split_file(data, "test.smi", "train-gen")
    out = _prepare_out(_need(c, "out", "train-gen"), cfg, "train-gen")
    tcfg = GeneratorTrainConfig.from_dict({k: c[k] for k in GeneratorTrainConfig.__dataclass_fields__
                                           if k in c and k != "dtype"} | {"dtype": cfg["dtype"]})
    seed = stage_seed(cfg, "train-gen")
    run_id = f"gen-{seed:016x}"[:20]
    scaler = PropertyScaler.fit(property_values(train))
    ckpt = out / "generator.ckpt"
    step, optimizer = 0, None
    if resume and ckpt.exists():
        model, optimizer, meta = load_model(ckpt, "generator", _dtype(cfg))
        step = int(meta["step"])
    else:
        model = build_model(generator_config(cfg["preset"]), seed, _dtype(cfg))
    trainer = GeneratorTrainer(train, tcfg, model, scaler, seed, run_id, GateReference.build(train, test),
                               optimizer, step)
    total = trainer.total_steps if c["max_steps"] is None else min(trainer.total_steps, int(c["max_steps"]))
    log = LossLog(out / "loss.csv", step)
    pairs_dir = out / "pairs"
    pairs_dir.mkdir(exist_ok=True)
    every = int(c["checkpoint_every"] or 0)

    def meta() -> dict:
        return {"step": trainer.step, "total_steps": trainer.total_steps, "run_id": run_id,
                "scaler": scaler.to_dict(), "train": tcfg.to_dict(), "seed": seed, "version": __version__}

    try:
        while trainer.step < total:
            parts = trainer.run_step()
            log.add(trainer.step - 1, parts)
            if trainer.step % trainer.steps_per_epoch == 0:
                epoch = trainer.step // trainer.steps_per_epoch - 1
                res = trainer.end_of_epoch(epoch)
                write_pairs(pairs_dir / f"epoch_{epoch:03d}.jsonl", res.pairs)
                _write_json(pairs_dir / f"epoch_{epoch:03d}.gate.json",
                            {**res.gate.to_dict(), "frechet": _finite(res.gate.frechet),
                             "f_max": _finite(res.gate.f_max), "n_pairs": len(res.pairs)})
                g = res.gate
                print(f"epoch {epoch}: validity {g.validity:.3f} frechet {g.frechet:.3f} "
                      f"overlap {g.kde_overlap:.3f} passed {g.passed} pairs {len(res.pairs)}")
                save_model(ckpt, "generator", model, trainer.optimizer, meta())
            elif every and trainer.step % every == 0:
                save_model(ckpt, "generator", model, trainer.optimizer, meta())
    finally:
        log.close()
    save_model(ckpt, "generator", model, trainer.optimizer, meta())
    _write_gate_csv(pairs_dir, out / "gates.csv")
    return EXIT_OK


def _finite(x):
    return x if isinstance(x, (int, float)) and math.isfinite(x) else None


GATE_FIELDS = ("epoch", "n_samples", "validity", "frechet", "kde_overlap", "v_min", "f_max", "passed", "n_pairs")


def _write_gate_csv(pairs_dir: Path, path: Path) -> None:
    rows = [json.loads(p.read_text()) for p in sorted(pairs_dir.glob("epoch_*.gate.json"))]
    with open(path, "w", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GATE_FIELDS)
        for r in rows:
            w.writerow(["" if r[k] is None else r[k] for k in GATE_FIELDS])


def cmd_collect(cfg: dict) -> int:
    from smilesfix.data import read_pairs, write_pairs
    from smilesfix.generator import EpochGateStats, EpochResult, collect_pairs

    c = cfg["collect"]
    run = Path(_need(c, "run", "collect"))
    _require_file(run / "generator.ckpt", "collect")
    gates = sorted((run / "pairs").glob("epoch_*.gate.json"))
    if not gates:
        raise MissingArtifact(run / "pairs", "collect")
    results = []
    for gp in gates:
        g = json.loads(gp.read_text())
        stats = EpochGateStats(g["epoch"], g["n_samples"], g["validity"],
                               math.inf if g["frechet"] is None else g["frechet"], g["kde_overlap"],
                               g["v_min"], math.inf if g["f_max"] is None else g["f_max"], g["passed"])
        pairs = read_pairs(_require_file(gp.with_name(gp.name.replace(".gate.json", ".jsonl")), "collect"))
        results.append(EpochResult(g["epoch"], stats, pairs))
    f_max = None if c["f_max"] is None else float(c["f_max"])
    v_min = None if c["v_min"] is None else float(c["v_min"])
    pairs = collect_pairs(results, v_min, f_max)
    out = _prepare_out(_need(c, "out", "collect"), cfg, "collect")
    write_pairs(out / "pairs.jsonl", pairs)
    used = [r.epoch for r in results
            if r.gate.validity >= (r.gate.v_min if v_min is None else v_min)
            and r.gate.frechet <= (r.gate.f_max if f_max is None else f_max)]
    _write_json(out / "collect.json", {"epochs_used": used, "n_pairs": len(pairs),
                                       "n_records": sum(p.multiplicity for p in pairs)})
    print(f"{len(pairs)} distinct pairs from epochs {used}")
    return EXIT_OK


# ---------------------------------------------------------------- fixer training
def _fixer_loop(cfg: dict, stage: str, sources, targets, init, resume: bool) -> int:
    from smilesfix.fixer import FixerTrainConfig, FixerTrainer, fixer_config
    from smilesfix.nn.training import build_model, load_model, save_model

    c = cfg[stage]
    out = _prepare_out(_need(c, "out", stage), cfg, stage)
    keys = {"epochs", "batch_size", "lr", "lr_min", "clip", "mask_ratio"}
    tcfg = FixerTrainConfig.from_dict({k: c[k] for k in keys if k in c} | {"dtype": cfg["dtype"]})
    seed = stage_seed(cfg, stage)
    ckpt = out / "fixer.ckpt"
    step, optimizer = 0, None
    if resume and ckpt.exists():
        model, optimizer, meta = load_model(ckpt, "fixer", _dtype(cfg))
        if meta.get("stage") != stage:
            raise CheckpointError(f"{ckpt} was written by {meta.get('stage')}, not {stage}")
        step = int(meta["step"])
    elif init is not None:
        model, _, _ = load_model(init, "fixer", _dtype(cfg))
    else:
        model = build_model(fixer_config(cfg["preset"]), seed, _dtype(cfg))
    trainer = FixerTrainer(sources, tcfg, model, seed, targets, optimizer, step)
    total = trainer.total_steps if c["max_steps"] is None else min(trainer.total_steps, int(c["max_steps"]))
    log = LossLog(out / "loss.csv", step)
    every = int(c["checkpoint_every"] or 0)

    def meta() -> dict:
        return {"stage": stage, "step": trainer.step, "total_steps": trainer.total_steps, "seed": seed,
                "train": tcfg.to_dict(), "version": __version__}

    try:
        while trainer.step < total:
            parts = trainer.run_step()
            log.add(trainer.step - 1, parts)
            if trainer.step % trainer.steps_per_epoch == 0 or (every and trainer.step % every == 0):
                save_model(ckpt, "fixer", model, trainer.optimizer, meta())
            if trainer.step % trainer.steps_per_epoch == 0:
                print(f"{stage} epoch {trainer.step // trainer.steps_per_epoch - 1}: loss {parts.total:.4f}")
    finally:
        log.close()
    save_model(ckpt, "fixer", model, trainer.optimizer, meta())
    return EXIT_OK


def cmd_pretrain(cfg: dict, resume: bool = False) -> int:
    c = cfg["pretrain"]
    train = _split_file(_need(c, "data", "pretrain"), "train.smi", "pretrain")
    return _fixer_loop(cfg, "pretrain", train, None, None, resume)


def cmd_finetune(cfg: dict, resume: bool = False) -> int:
    from smilesfix.data import read_pairs
    from smilesfix.fixer import expand_pairs

    c = cfg["finetune"]
    pre = Path(_need(c, "pretrained", "finetune"))
    init = pre / "fixer.ckpt" if pre.is_dir() else pre
    _require_file(init, "finetune")
    pairs = read_pairs(_require_file(_need(c, "pairs", "finetune"), "finetune"))
    if not pairs:
        raise EmptyInput("pair file holds no usable records")
    sources, targets = expand_pairs(pairs)
    return _fixer_loop(cfg, "finetune", sources, targets, init, resume)


# ---------------------------------------------------------------- fix / eval
def _load_fixer(path, cfg: dict):
    from smilesfix.fixer import DecodeConfig, Fixer
    from smilesfix.nn.training import load_model

    p = Path(path)
    p = p / "fixer.ckpt" if p.is_dir() else p
    _require_file(p, "fix")
    model, _, _ = load_model(p, "fixer", _dtype(cfg))
    c = cfg["fix"]
    decode = DecodeConfig(int(c["beam"]), int(c["samples"]), float(c["temperature"]), stage_seed(cfg, "fix"),
                          int(c["batch_size"]))
    return Fixer(model, decode)


def _report_dict(rep) -> dict:
    from smilesfix.metrics.report import finite_or_none

    d = rep.to_dict()
    for k in ("snn", "frechet", "scaffold_novelty", "correction_rate"):
        d[k] = finite_or_none(d[k])
    return d


def cmd_fix(cfg: dict, stdin: bool = False) -> int:
    from smilesfix.fixer import correct_batch, write_outcomes_csv

    c = cfg["fix"]
    fixer = _load_fixer(_need(c, "checkpoint", "fix"), cfg)
    if stdin or c["input"] == "-":
        for line in sys.stdin:
            s = line.strip()
            if s:
                print(fixer.fix(s).output, flush=True)
        return EXIT_OK
    src = _require_file(_need(c, "input", "fix"), "fix")
    samples = _read_lines(src)
    if not samples:
        raise EmptyInput(f"{src} holds no SMILES")
    ref = None
    if c["reference"]:
        from smilesfix.data import read_smiles

        ref = read_smiles(_require_file(c["reference"], "fix"))
    result = correct_batch(fixer, samples, ref, None, c["k"])
    out = _prepare_out(_need(c, "out", "fix"), cfg, "fix")
    with open(out / "outcomes.csv", "w", encoding="utf-8") as fh:
        write_outcomes_csv(result.outcomes, fh)
    summary = {"before": _report_dict(result.before), "after": _report_dict(result.after),
               "mean_edit_distance": result.mean_edit_distance}
    _write_json(out / "summary.json", summary)
    b, a = result.before, result.after
    rate = "n/a" if a.correction_rate is None else f"{a.correction_rate:.4f}"
    print(f"validity {b.validity:.4f} -> {a.validity:.4f}; corrected {a.n_corrected}/{a.n_previously_invalid} "
          f"(rate {rate})")
    return EXIT_OK


def cmd_eval(cfg: dict) -> int:
    from smilesfix.data import read_smiles
    from smilesfix.metrics.report import ReferenceSet, compute_report, write_distribution_csvs

    c = cfg["eval"]
    gen_path = _require_file(_need(c, "gen", "eval"), "eval")
    ref_path = _require_file(_need(c, "ref", "eval"), "eval")
    gen = _read_lines(gen_path)
    ref = read_smiles(ref_path)
    if not gen or not ref:
        raise EmptyInput("generated and reference files must be non-empty")
    extra = {Path(p).stem: read_smiles(_require_file(p, "eval")) for p in (c["extra"] or [])}
    report = compute_report(gen, ReferenceSet(ref), None, c["k"])
    out = _prepare_out(_need(c, "out", "eval"), cfg, "eval")
    _write_json(out / "metrics.json", _report_dict(report))
    sets = {"generated": gen, "reference": ref, **extra}
    with open(out / "pca.csv", "w", encoding="utf-8") as pf, open(out / "kde.csv", "w", encoding="utf-8") as kf:
        write_distribution_csvs(sets, pf, kf, int(c["grid_points"]))
    print(json.dumps(_report_dict(report), sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------- ablation
def cmd_ablate(cfg: dict) -> int:
    from smilesfix.data import read_pairs
    from smilesfix.fixer import ABLATION_FIELDS, AblationRow, DecodeConfig, FixerTrainConfig, fixer_config, masking_ablation

    c = cfg["ablate"]
    data = _need(c, "data", "ablate")
    train = _split_file(data, "train.smi", "ablate")
    pairs = read_pairs(_require_file(_need(c, "pairs", "ablate"), "ablate"))
    eval_path = c["eval_set"] or Path(data) / "heldout_corrupted.jsonl"
    held = read_pairs(_require_file(eval_path, "ablate"))[: int(c["eval_size"])]
    if not held:
        raise EmptyInput("empty evaluation set")
    out = _prepare_out(_need(c, "out", "ablate"), cfg, "ablate")
    table = out / "ablation.csv"
    done = {}
    if table.exists():
        with open(table, encoding="utf-8") as fh:
            for r in csv.DictReader(fh):
                row = AblationRow(*(float(r[k]) for k in ABLATION_FIELDS))
                done[row.mask_ratio] = row
    ratios = [float(r) for r in c["ratios"]]
    base = {"batch_size": int(c["batch_size"]), "lr": float(c["lr"]), "lr_min": float(c["lr_min"]),
            "dtype": cfg["dtype"]}
    pre = FixerTrainConfig(epochs=int(c["pretrain_epochs"]), **base)
    fine = FixerTrainConfig(epochs=int(c["finetune_epochs"]), **base)
    decode = DecodeConfig(int(c["beam"]), int(c["samples"]), float(c["temperature"]), stage_seed(cfg, "ablate-fix"))

    def flush(rows):
        tmp = table.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ABLATION_FIELDS)
            for r in rows:
                w.writerow([repr(getattr(r, k)) for k in ABLATION_FIELDS])
        tmp.replace(table)

    finished = dict(done)

    def on_row(row):
        finished[row.mask_ratio] = row
        flush([finished[r] for r in ratios if r in finished])
        print(f"ratio {row.mask_ratio:.2f}: validity {row.validity:.2f} precision {row.precision:.2f} "
              f"recall {row.recall:.2f} f1 {row.f1:.2f}")

    rows = masking_ablation(ratios, train, pairs, [(p.invalid, p.valid) for p in held],
                            fixer_config(cfg["preset"]), pre, fine, stage_seed(cfg, "ablate"), decode, done, on_row)
    flush(rows)
    return EXIT_OK


# ---------------------------------------------------------------- parser
def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON config file")
    p.add_argument("--seed", type=int, help="master seed (child seeds are hashed per stage)")
    p.add_argument("--preset", choices=["desk", "paper"], help="model size preset")
    p.add_argument("--dtype", choices=["float32", "float64"], help="parameter precision")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="smilesfix", description="SMILES validity correction pipeline")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="filter a corpus and write scaffold splits")
    _add_common(p)
    p.add_argument("corpus", nargs="?", help="SMILES file, one molecule per line")
    p.add_argument("--out", help="output directory")
    p.add_argument("--limit", type=int, help="keep at most this many accepted molecules")
    p.add_argument("--heldout-corruptions", dest="heldout_corruptions", type=int,
                   help="number of corrupted test molecules to write")

    def training(name, help_, data_flag="--data"):
        q = sub.add_parser(name, help=help_)
        _add_common(q)
        if data_flag:
            q.add_argument(data_flag, dest=data_flag.strip("-").replace("-", "_"), help="ingest output directory")
        q.add_argument("--out", help="run directory")
        q.add_argument("--epochs", type=int)
        q.add_argument("--batch-size", dest="batch_size", type=int)
        q.add_argument("--lr", type=float)
        q.add_argument("--max-steps", dest="max_steps", type=int, help="stop after this many steps in total")
        q.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
        q.add_argument("--resume", action="store_true", help="continue from the run directory's checkpoint")
        return q

    q = training("train-gen", "train the generator and harvest invalid/valid pairs")
    q.add_argument("--beta", type=float)
    q.add_argument("--gate-samples", dest="gate_samples", type=int)
    q.add_argument("--harvest-limit", dest="harvest_limit", type=int)
    q.add_argument("--v-min", dest="v_min", type=float)
    q.add_argument("--f-max-factor", dest="f_max_factor", type=float)

    p = sub.add_parser("collect", help="merge harvested pairs from gated epochs")
    _add_common(p)
    p.add_argument("--run", help="train-gen run directory")
    p.add_argument("--out", help="output directory")
    p.add_argument("--v-min", dest="v_min", type=float, help="override the recorded validity threshold")
    p.add_argument("--f-max", dest="f_max", type=float, help="override the recorded Frechet threshold")

    q = training("pretrain", "masked pre-training of the fixer")
    q.add_argument("--mask-ratio", dest="mask_ratio", type=float)

    q = training("finetune", "fine-tune a pre-trained fixer on pairs", data_flag=None)
    q.add_argument("--pretrained", help="pretrain run directory or checkpoint")
    q.add_argument("--pairs", help="pairs JSONL")

    p = sub.add_parser("fix", help="correct invalid SMILES")
    _add_common(p)
    p.add_argument("input", nargs="?", help="SMILES file ('-' or --stdin to stream)")
    p.add_argument("--checkpoint", help="fixer checkpoint or run directory")
    p.add_argument("--out", help="output directory")
    p.add_argument("--reference", help="reference SMILES for SNN / Frechet / scaffold novelty")
    p.add_argument("--beam", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--stdin", action="store_true", help="read stdin, print one corrected SMILES per line")

    p = sub.add_parser("eval", help="metrics report plus PCA/KDE tables")
    _add_common(p)
    p.add_argument("--gen", help="generated SMILES file")
    p.add_argument("--ref", help="reference SMILES file")
    p.add_argument("--extra", nargs="*", help="additional sets for the PCA/KDE tables")
    p.add_argument("--out", help="output directory")
    p.add_argument("--k", type=int, help="uniqueness cut-off")

    p = sub.add_parser("ablate", help="masking-ratio sweep")
    _add_common(p)
    p.add_argument("--data", help="ingest output directory")
    p.add_argument("--pairs", help="pairs JSONL for fine-tuning")
    p.add_argument("--eval-set", dest="eval_set", help="pairs JSONL of (invalid, label) to score")
    p.add_argument("--out", help="output directory")
    p.add_argument("--ratios", type=float, nargs="+")
    p.add_argument("--eval-size", dest="eval_size", type=int)
    p.add_argument("--pretrain-epochs", dest="pretrain_epochs", type=int)
    p.add_argument("--finetune-epochs", dest="finetune_epochs", type=int)
    return ap


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (NonFiniteLoss, NonFiniteInput, DegenerateData)):
        return EXIT_NUMERIC
    if isinstance(exc, (MissingArtifact, CheckpointError, OSError)):
        return EXIT_IO
    if isinstance(exc, (ConfigError, SchemaError, EmptyInput, EmptyCorpus, EmptySet, InputTooLong,
                        InsufficientScaffoldDiversity, NoEpochPassedGate, SmilesFixError, ValueError)):
        return EXIT_INVALID
    raise exc


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    torch.set_num_threads(1)
    try:
        cfg = resolve_config(args)
        cmd = args.command
        resume = getattr(args, "resume", False)
        if cmd == "ingest":
            return cmd_ingest(cfg)
        if cmd == "train-gen":
            return cmd_train_gen(cfg, resume)
        if cmd == "collect":
            return cmd_collect(cfg)
        if cmd == "pretrain":
            return cmd_pretrain(cfg, resume)
        if cmd == "finetune":
            return cmd_finetune(cfg, resume)
        if cmd == "fix":
            return cmd_fix(cfg, args.stdin)
        if cmd == "eval":
            return cmd_eval(cfg)
        return cmd_ablate(cfg)
    except Exception as exc:  # mapped to exit codes; anything unexpected re-raises
        code = _exit_code(exc)
        print(f"smilesfix {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
