"""Line-delimited shot records and plain-text matrix dumps.

Shot files are JSON lines: a header object first, then one object per
shot. Matrix dumps are whitespace-separated ``re im`` pairs, one matrix row
per line, after ``#`` header lines.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

import numpy as np

from .netsim import ShotRecord

SHOT_SCHEMA = "ionnet.shots"
SHOT_VERSION = 1
MATRIX_SCHEMA = "ionnet.matrix"
MATRIX_VERSION = 1


class RecordFormatError(ValueError):
    pass


def write_records(path, records: Iterable[ShotRecord], header: dict) -> Path:
    path = Path(path)
    head = {"schema": SHOT_SCHEMA, "version": SHOT_VERSION, **header}
    with path.open("w") as fh:
        fh.write(json.dumps(head, sort_keys=True) + "\n")
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    return path


def read_records(path) -> tuple[dict, list[ShotRecord]]:
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
        if not first:
            raise RecordFormatError(f"{path}: empty file")
        head = json.loads(first)
        if head.get("schema") != SHOT_SCHEMA:
            raise RecordFormatError(f"{path}: not a shot record file")
        if head.get("version") != SHOT_VERSION:
            raise RecordFormatError(f"{path}: unsupported version {head.get('version')}")
        recs = [ShotRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
    return head, recs


def write_matrix(path, m: np.ndarray, kind: str, meta: dict | None = None) -> Path:
    """Dump a complex matrix; ``kind`` is ``density`` or ``superoperator``."""
    m = np.asarray(m, dtype=complex)
    head = {"schema": MATRIX_SCHEMA, "version": MATRIX_VERSION, "kind": kind,
            "shape": list(m.shape), "order": "row-major", "entries": "re im",
            "vectorization": "column", **(meta or {})}
    lines = [f"# {json.dumps(head, sort_keys=True)}"]
    for row in m:
        lines.append(" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_matrix(path) -> tuple[dict, np.ndarray]:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# "):
        raise RecordFormatError(f"{path}: missing matrix header")
    head = json.loads(text[0][2:])
    if head.get("schema") != MATRIX_SCHEMA:
        raise RecordFormatError(f"{path}: not a matrix dump")
    rows = [np.array(line.split(), dtype=float) for line in text[1:] if line and not line.startswith("#")]
    arr = np.array(rows)
    m = arr[:, 0::2] + 1j * arr[:, 1::2]
    if list(m.shape) != head["shape"]:
        raise RecordFormatError(f"{path}: shape {m.shape} does not match header {head['shape']}")
    return head, m
