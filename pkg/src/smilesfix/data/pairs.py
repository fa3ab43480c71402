"""Invalid/valid training pairs and their JSON-lines store."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from smilesfix.errors import SchemaError
from smilesfix.smiles.chem import is_valid

PAIR_FIELDS = ("invalid", "valid", "epoch", "run_id", "multiplicity", "properties")


@dataclass
class PairRecord:
    invalid: str
    valid: str
    epoch: int
    run_id: str
    multiplicity: int = 1
    properties: list[float] = field(default_factory=list)
    source: str = "harvest"

    @property
    def key(self) -> tuple[str, str]:
        return self.invalid, self.valid

    def check(self) -> str | None:
        """Reason the record breaks its invariants, or None."""
        if self.invalid == self.valid:
            return "invalid and label are identical"
        if not is_valid(self.valid):
            return "label does not validate"
        if is_valid(self.invalid):
            return "invalid member validates"
        if self.multiplicity < 1:
            return "multiplicity below 1"
        return None

    def to_json(self) -> str:
        return json.dumps({
            "invalid": self.invalid, "valid": self.valid, "epoch": self.epoch, "run_id": self.run_id,
            "multiplicity": self.multiplicity, "properties": list(self.properties), "source": self.source,
        }, separators=(",", ":"))

    @classmethod
    def from_obj(cls, obj, line: int | None = None) -> "PairRecord":
        if not isinstance(obj, dict):
            raise SchemaError("record is not a JSON object", line)
        missing = [k for k in PAIR_FIELDS if k not in obj]
        if missing:
            raise SchemaError(f"missing fields {missing}", line)
        extra = set(obj) - set(PAIR_FIELDS) - {"source"}
        if extra:
            raise SchemaError(f"unknown fields {sorted(extra)}", line)
        inv, val, ep, run, mult, props = (obj[k] for k in PAIR_FIELDS)
        if not isinstance(inv, str) or not isinstance(val, str):
            raise SchemaError("invalid/valid must be strings", line)
        if not isinstance(ep, int) or isinstance(ep, bool) or not isinstance(mult, int) or isinstance(mult, bool):
            raise SchemaError("epoch/multiplicity must be integers", line)
        if not isinstance(run, str):
            raise SchemaError("run_id must be a string", line)
        if type(props) is not list:
            raise SchemaError("properties must be a list of numbers", line)
        for p in props:
            if type(p) is not float and type(p) is not int:
                raise SchemaError("properties must be a list of numbers", line)
        source = obj.get("source", "harvest")
        if not isinstance(source, str):
            raise SchemaError("source must be a string", line)
        return cls(inv, val, ep, run, mult, [float(p) for p in props], source)


def write_pairs(path, records: Iterable[PairRecord]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.to_json())
            fh.write("\n")
            n += 1
    return n


def iter_pairs(path, quarantine=None, strict: bool = False) -> Iterator[PairRecord]:
    """Stream records, re-checking each one's invariants.

    Lines that fail to parse or break an invariant go to ``quarantine``
    (default ``<path>.quarantine``) as ``{"line", "reason", "raw"}`` objects;
    with ``strict`` the first such line raises :class:`SchemaError`.
    """
    path = Path(path)
    qpath = Path(quarantine) if quarantine is not None else path.with_name(path.name + ".quarantine")
    qfh = None
    try:
        with open(path, encoding="utf-8") as fh:
            for n, raw in enumerate(fh, 1):
                if not raw.strip():
                    continue
                try:
                    rec = PairRecord.from_obj(json.loads(raw), n)
                    reason = rec.check()
                    if reason is not None:
                        raise SchemaError(reason, n)
                except (json.JSONDecodeError, SchemaError) as exc:
                    err = exc if isinstance(exc, SchemaError) else SchemaError(f"bad JSON: {exc.msg}", n)
                    if strict:
                        raise err from None
                    if qfh is None:
                        qfh = open(qpath, "w", encoding="utf-8")
                    qfh.write(json.dumps({"line": n, "reason": str(err), "raw": raw.rstrip("\n")}) + "\n")
                    continue
                yield rec
    finally:
        if qfh is not None:
            qfh.close()


def read_pairs(path, quarantine=None, strict: bool = False) -> list[PairRecord]:
    return list(iter_pairs(path, quarantine, strict))


def merge_pairs(records: Iterable[PairRecord]) -> list[PairRecord]:
    """Collapse identical (invalid, label) pairs, summing multiplicity; first occurrence kept."""
    merged: dict[tuple[str, str], PairRecord] = {}
    for r in records:
        if r.key in merged:
            merged[r.key].multiplicity += r.multiplicity
        else:
            merged[r.key] = PairRecord(r.invalid, r.valid, r.epoch, r.run_id, r.multiplicity,
                                       list(r.properties), r.source)
    return list(merged.values())
