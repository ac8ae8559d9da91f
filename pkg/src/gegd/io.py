"""File formats: trace CSV, PGM design dumps, benchmark summary CSV."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .fdg import FeasibleDesign
from .optimizer import TRACE_FIELDS, OptimizationTrace

SUMMARY_FIELDS = ("algorithm", "rep", "best_cost", "wall_time", "hf_equiv_cost")


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_trace(path, trace: OptimizationTrace, tagged: bool = False) -> Path:
    """Write one row per iteration; floats use round-trip ``repr`` formatting."""
    path = Path(path)
    fields = (("algorithm",) if tagged else ()) + TRACE_FIELDS
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for rec in trace.records:
            row = [trace.algorithm] if tagged else []
            row += [_fmt(rec[k]) for k in TRACE_FIELDS]
            w.writerow(row)
    return path


def read_trace(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_pgm(path, design) -> Path:
    """Plain-text PGM with maxval 1 (1 = solid)."""
    bits = design.rho_f if isinstance(design, FeasibleDesign) else np.asarray(design)
    bits = (bits > 0.5).astype(np.uint8)
    rows, cols = bits.shape
    lines = ["P2", f"{cols} {rows}", "1"] + [" ".join(map(str, r)) for r in bits]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_pgm(path) -> np.ndarray:
    tokens = []
    for line in Path(path).read_text().splitlines():
        tokens += line.split("#", 1)[0].split()
    if not tokens or tokens[0] != "P2":
        raise ValueError(f"{path}: not a plain PGM file")
    cols, rows, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    data = np.array(tokens[4:], dtype=int)
    if data.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} pixels, found {data.size}")
    if maxval < 1 or data.min(initial=0) < 0 or data.max(initial=0) > maxval:
        raise ValueError(f"{path}: pixel values out of range")
    return (data.reshape(rows, cols) * 2 > maxval).astype(np.int8)


def read_design(path) -> np.ndarray:
    """Load a binary design from PGM or from CSV/whitespace text of 0/1 values."""
    path = Path(path)
    head = path.read_text()[:2]
    if head == "P2":
        return read_pgm(path)
    rows = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if line:
            rows.append([int(float(v)) for v in line.replace(",", " ").split()])
    arr = np.array(rows)
    if arr.ndim != 2 or not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{path}: design must be a rectangular 0/1 array")
    return arr.astype(np.int8)


def write_summary(path, results) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for r in results:
            w.writerow([r.algorithm, r.rep, _fmt(r.best_cost), _fmt(r.wall_time), _fmt(r.hf_equiv_cost)])
    return path
