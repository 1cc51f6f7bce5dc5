"""CSV/JSON serialization of arcs, batches and reports."""

from __future__ import annotations

import json
import os
from typing import Iterable, List

import numpy as np

from .core import HybridArc, Termination


def _num(v: float) -> str:
    # 17 significant digits: round-trips every double
    return f"{float(v):.16e}"


def arc_to_csv(arc: HybridArc) -> str:
    n = arc.x.shape[1]
    lines = [",".join(["t", "j"] + [f"x{i}" for i in range(n)])]
    for t, j, x in arc.samples:
        lines.append(",".join([_num(t), str(j)] + [_num(v) for v in x]))
    lines.append(f"# termination={arc.termination.value}")
    return "\n".join(lines) + "\n"


def write_arc_csv(arc: HybridArc, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(arc_to_csv(arc))


def read_arc_csv(path: str, branch_id: int = 0) -> HybridArc:
    rows = []
    termination = None
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["t", "j"]:
            raise ValueError(f"{path}: unexpected header {header}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                if key == "termination":
                    termination = Termination(val)
                continue
            rows.append([float(v) for v in line.split(",")])
    if termination is None:
        raise ValueError(f"{path}: missing termination comment")
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return HybridArc(data[:, 0], data[:, 1].astype(np.int64), data[:, 2:], termination, branch_id)


def write_json(obj, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def write_batch(items, outdir: str, prefix: str = "arc") -> List[str]:
    """One CSV per (initial condition, branch) plus ``index.json``."""
    os.makedirs(outdir, exist_ok=True)
    index = []
    written = []
    for i, item in enumerate(items):
        files = []
        for arc in item.arcs:
            name = f"{prefix}_{i:04d}_b{arc.branch_id}.csv"
            write_arc_csv(arc, os.path.join(outdir, name))
            files.append(name)
            written.append(name)
        entry = {
            "x0": [float(v) for v in item.x0],
            "n_arcs": len(item.arcs),
            "termination": [a.termination.value for a in item.arcs],
            "files": files,
        }
        if item.error:
            entry["error"] = item.error
        index.append(entry)
    write_json(index, os.path.join(outdir, "index.json"))
    return written


def basin_to_csv(points: np.ndarray, classes: Iterable[str]) -> str:
    n = points.shape[1]
    lines = [",".join([f"x0_{i}" for i in range(n)] + ["class"])]
    for p, c in zip(points, classes):
        lines.append(",".join([_num(v) for v in p] + [c]))
    return "\n".join(lines) + "\n"
