"""Deterministic CSV/JSON artifact writers.

All floats are printed with 17 significant digits so that re-reading an
artifact reproduces the binary values exactly; rows are written in a
deterministic order, making artifacts byte-identical across runs with
the same configuration and seed.
"""

from __future__ import annotations

import json
import os
from typing import Iterable, Sequence


def fmt(x) -> str:
    if isinstance(x, (int, bool)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.17g}"


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return header, rows


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path
