"""Result files: trajectories, final populations, summaries and manifests.

Floats are written with 17 significant digits so they read back bit-exact.
Every file is written to a temporary sibling and renamed into place.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import IntegrityError

CSV_SCHEMA = "mogdfm-csv 1"
TRAJECTORY_COLUMNS = ("iteration", "t", "position", "kind", "token", "accepted", "alignment", "phi", "rbar")


def fmt(v) -> str:
    return format(float(v), ".17g")


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_json(obj) -> str:
    """Deterministic JSON: sorted keys, numpy scalars and arrays unwrapped."""

    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, Path):
            return str(o)
        raise TypeError(f"not JSON serializable: {type(o).__name__}")

    return json.dumps(obj, sort_keys=True, indent=2, default=default, allow_nan=True) + "\n"


def write_json(path, obj) -> None:
    atomic_write(path, to_json(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {CSV_SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _read_csv(path):
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != f"# schema: {CSV_SCHEMA}":
            raise IntegrityError(f"{path}: missing or unsupported schema line {first!r}")
        rows = list(csv.reader(fh))
    if not rows:
        raise IntegrityError(f"{path}: no header")
    return rows[0], rows[1:]


def trajectory_csv(tr, names) -> str:
    from .sampler import KINDS

    header = list(TRAJECTORY_COLUMNS) + list(names)
    rows = []
    for k in range(len(tr)):
        row = [k, fmt(tr.t[k]), int(tr.position[k]), KINDS[tr.kind[k]], int(tr.token[k]),
               int(tr.accepted[k]), fmt(tr.alignment[k]), fmt(tr.phi[k]), fmt(tr.rbar[k])]
        if tr.objectives is not None:
            row += [fmt(v) for v in tr.objectives[k]]
        rows.append(row)
    if tr.objectives is None:
        header = header[: len(TRAJECTORY_COLUMNS)]
    return _csv_text(header, rows)


def trajectory_record(tr, vocabulary, names) -> dict:
    return {
        "run_index": tr.run_index,
        "seed": tr.seed,
        "weight": [float(v) for v in tr.weight],
        "initial": vocabulary.decode(tr.initial),
        "final": vocabulary.decode(tr.final),
        "final_objectives": dict(zip(names, (float(v) for v in tr.final_objectives))),
        "accepted_steps": int(tr.accepted.sum()),
        "evaluations": int(tr.evaluations),
        "iterations": {
            "t": tr.t, "position": tr.position, "kind": tr.kind_names(), "token": tr.token,
            "accepted": tr.accepted.astype(int), "alignment": tr.alignment, "phi": tr.phi, "rbar": tr.rbar,
            "objectives": None if tr.objectives is None else tr.objectives,
        },
    }


def population_csv(sequences, objectives, vocabulary, names, index_name="run") -> str:
    header = [index_name, "sequence"] + list(names)
    rows = [[n, vocabulary.decode(x)] + [fmt(v) for v in f] for n, (x, f) in enumerate(zip(sequences, objectives))]
    return _csv_text(header, rows)


def read_population(path, vocabulary, names=None):
    """Sequences and stored objective values from a population CSV."""
    header, rows = _read_csv(path)
    if len(header) < 2 or header[1] != "sequence":
        raise IntegrityError(f"{path}: second column must be 'sequence'")
    stored_names = header[2:]
    if names is not None and list(names) != stored_names:
        raise IntegrityError(f"{path}: objective columns {stored_names} do not match {list(names)}")
    seqs = np.array([vocabulary.encode(r[1]) for r in rows]) if rows else np.zeros((0, 0), dtype=np.int64)
    F = np.array([[float(v) for v in r[2:]] for r in rows], dtype=float).reshape(len(rows), len(stored_names))
    return seqs, F, stored_names


def sequences_text(sequences, vocabulary) -> str:
    return "".join(vocabulary.decode(x) + "\n" for x in sequences)
