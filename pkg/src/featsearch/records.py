"""(program, score) training records and their append-only JSONL log."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from . import expr
from .errors import InputError

PROVENANCES = ("rl", "random", "augmented")


@dataclass(frozen=True)
class TransformationRecord:
    program: tuple[str, ...]
    score: float
    provenance: str = "rl"

    def __post_init__(self):
        object.__setattr__(self, "program", tuple(self.program))
        object.__setattr__(self, "score", float(self.score))
        if self.provenance not in PROVENANCES:
            raise InputError(f"unknown provenance {self.provenance!r}")

    def to_json(self) -> str:
        return json.dumps(
            {"program": expr.to_text(self.program), "score": self.score, "provenance": self.provenance}
        )

    @classmethod
    def from_json(cls, line: str) -> "TransformationRecord":
        d = json.loads(line)
        return cls(expr.from_text(d["program"]), float(d["score"]), d.get("provenance", "rl"))


def augment(record: TransformationRecord, k: int, rng: np.random.Generator) -> list[TransformationRecord]:
    """``k`` segment-shuffled copies of ``record`` that keep its score."""
    return [
        TransformationRecord(p, record.score, "augmented")
        for p in expr.augment(record.program, k, rng)
    ]


def augment_corpus(records, k: int, seed: int) -> list[TransformationRecord]:
    """Originals plus ``k`` shuffles each, dropping exact (program, score) repeats."""
    rng = np.random.default_rng(seed)
    seen = set()
    out = []
    for r in records:
        for cand in [r] + augment(r, k, rng):
            key = (cand.program, cand.score)
            if key not in seen:
                seen.add(key)
                out.append(cand)
    return out


class RecordLog:
    """Append-only JSONL writer; each record is flushed as soon as it is written."""

    def __init__(self, path, mode: str = "w"):
        self.path = Path(path)
        self._fh = self.path.open(mode, encoding="utf-8")

    def append(self, record: TransformationRecord) -> None:
        self._fh.write(record.to_json() + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_records(path, records: Iterable[TransformationRecord]) -> None:
    with RecordLog(path) as log:
        for r in records:
            log.append(r)


def read_records(path) -> list[TransformationRecord]:
    """Load a record log. A truncated final line (crash mid-write) is ignored."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such record log: {path}")
    lines = path.read_text(encoding="utf-8").split("\n")
    out = []
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            out.append(TransformationRecord.from_json(line))
        except (json.JSONDecodeError, KeyError, ValueError) as e:
            last = all(not rest.strip() for rest in lines[i + 1:])
            if last:
                break
            raise InputError(f"{path}:{i + 1}: corrupt record ({e})") from None
    return out
