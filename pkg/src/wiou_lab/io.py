"""CSV and manifest files. Floats are written with 17 significant digits."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CURVE_HEADER = ("loss", "iteration", "mean_iou_loss", "mean_training_loss")
CASES_HEADER = ("id", "ax", "ay", "aw", "ah", "tx", "ty", "tw", "th")
GAIN_HEADER = ("beta", "r")
RANKING_HEADER = (
    "rank",
    "loss",
    "final_mean_iou_loss",
    "final_mean_training_loss",
    "iterations_to_threshold",
)
GRADCHECK_HEADER = ("loss", "cases", "max_rel_error", "max_abs_grad", "status")


def fmt(value: float) -> str:
    return format(float(value), ".17g")


def _write(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def read_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)


def write_curve(path: Path, records) -> Path:
    rows = ((r.loss_name, r.iteration, fmt(r.mean_iou_loss), fmt(r.mean_training_loss)) for r in records)
    return _write(path, CURVE_HEADER, rows)


def read_curve(path: Path):
    from .simlab import CurveRecord

    header, rows = read_rows(path)
    if tuple(header) != CURVE_HEADER:
        raise ValueError(f"{path}: unexpected curve header {header}")
    return [CurveRecord(int(it), float(m), float(t), name) for name, it, m, t in rows]


def write_cases(path: Path, cases) -> Path:
    anchors, targets = cases.anchors(), cases.targets()
    rows = (
        (int(cid), *(fmt(v) for v in a), *(fmt(v) for v in t))
        for cid, a, t in zip(cases.ids, anchors, targets)
    )
    return _write(path, CASES_HEADER, rows)


def read_cases(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    header, rows = read_rows(path)
    if tuple(header) != CASES_HEADER:
        raise ValueError(f"{path}: unexpected cases header {header}")
    arr = np.array([[float(v) for v in row] for row in rows]).reshape(-1, 9)
    return arr[:, 0].astype(np.int64), arr[:, 1:5], arr[:, 5:9]


def write_gain_curve(path: Path, rows: Sequence[tuple[float, float]]) -> Path:
    return _write(path, GAIN_HEADER, ((fmt(b), fmt(r)) for b, r in rows))


def write_ranking(path: Path, report) -> Path:
    rows = (
        (
            k + 1,
            row.loss,
            fmt(row.final_mean_iou_loss),
            fmt(row.final_mean_training_loss),
            "" if row.iterations_to_threshold is None else row.iterations_to_threshold,
        )
        for k, row in enumerate(report)
    )
    return _write(path, RANKING_HEADER, rows)


def write_gradcheck(path: Path, rows: Iterable[Sequence]) -> Path:
    return _write(path, GRADCHECK_HEADER, rows)


def write_manifest(path: Path, manifest: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(path: Path) -> dict:
    return json.loads(Path(path).read_text())
