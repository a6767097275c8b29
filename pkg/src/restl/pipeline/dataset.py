"""Instruction/input/output JSON Lines datasets."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterable, List, NamedTuple

from ..stl import Formula, STLError, parse

FIELDS = ("instruction", "input", "output")


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class NlStlRecord:
    instruction: str
    input: str
    output: str
    formula: Formula = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.input.strip():
            raise DataError("record input is empty")
        if self.formula is None:
            object.__setattr__(self, "formula", parse(self.output))

    def to_json(self) -> dict:
        return {"instruction": self.instruction, "input": self.input, "output": self.output}


class Loaded(NamedTuple):
    records: List[NlStlRecord]
    rejects: List[dict]


def record_from_json(obj) -> NlStlRecord:
    if not isinstance(obj, dict):
        raise DataError("record is not a JSON object")
    missing = [k for k in FIELDS if not isinstance(obj.get(k), str)]
    if missing:
        raise DataError(f"missing or non-string fields: {', '.join(missing)}")
    return NlStlRecord(obj["instruction"], obj["input"], obj["output"])


def load_dataset(path) -> Loaded:
    """Read a dataset; bad lines go to ``rejects`` as {line, error, raw}."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    records, rejects = [], []
    for no, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            records.append(record_from_json(json.loads(line)))
        except (json.JSONDecodeError, DataError, STLError) as exc:
            rejects.append({"line": no, "error": str(exc), "raw": line})
    if not records:
        raise DataError(f"no valid records in {path} ({len(rejects)} rejected)")
    return Loaded(records, rejects)


def dumps_records(records: Iterable) -> str:
    rows = [r.to_json() if isinstance(r, NlStlRecord) else r for r in records]
    return "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in rows)


def atomic_write(path, text: str):
    """Write via a temporary file so readers never see a partial artifact."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_dataset(path, records: Iterable):
    atomic_write(path, dumps_records(records))


def write_jsonl(path, rows: Iterable[dict]):
    atomic_write(path, "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in rows))


def read_jsonl(path) -> List[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_predictions(path) -> List[tuple]:
    """(reference text, prediction text or None) pairs from a predictions file.

    Each line holds the reference under ``reference`` or ``output`` and the
    prediction under ``prediction``, ``hyp`` or ``generated``.
    """
    pairs = []
    for no, row in enumerate(read_jsonl(path), 1):
        ref = row.get("reference", row.get("output"))
        hyp = row.get("prediction", row.get("hyp", row.get("generated")))
        if not isinstance(ref, str):
            raise DataError(f"line {no}: no reference text")
        pairs.append((ref, hyp if isinstance(hyp, str) else None))
    if not pairs:
        raise DataError(f"no predictions in {path}")
    return pairs

