"""Gradient-descent regression runs over a case set."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..focusing import EmaTracker
from ..geometry import BBox
from ..losses import LossSpec, compose
from .cases import CaseSet, RegressionCase, SimConfig, generate_cases
from .kernel import Backend, evaluate_batch


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CurveRecord:
    iteration: int
    mean_iou_loss: float
    mean_training_loss: float
    loss_name: str


@dataclass
class SimRun:
    config: SimConfig
    spec: LossSpec
    records: list[CurveRecord] = field(default_factory=list)
    final_anchors: np.ndarray | None = field(default=None, repr=False)

    @property
    def final_mean_iou_loss(self) -> float:
        return self.records[-1].mean_iou_loss

    def iterations_to(self, threshold: float) -> int | None:
        for rec in self.records:
            if rec.mean_iou_loss <= threshold:
                return rec.iteration
        return None


def _check_finite(grad: np.ndarray, ids: np.ndarray, spec: LossSpec) -> None:
    bad = ~np.isfinite(grad).all(axis=1)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise SimulationError(
            f"non-finite gradient {grad[k].tolist()} for case id {int(ids[k])} under loss {spec.name}"
        )


def descend_case(
    case: RegressionCase,
    spec: LossSpec,
    tracker: EmaTracker | None,
    lr: float,
    min_size: float = 1e-6,
) -> BBox:
    """One plain gradient step on the anchor of a single case (tape path)."""
    try:
        composed = compose(spec, case.anchor, case.target, tracker)
    except ValueError as exc:
        raise SimulationError(f"case id {case.id} under loss {spec.name}: {exc}") from exc
    g = np.asarray(composed.grads)
    _check_finite(g[None, :], np.array([case.id]), spec)
    x, y, w, h = case.anchor.as_tuple()
    return BBox(
        x - lr * g[0],
        y - lr * g[1],
        max(w - lr * g[2], min_size),
        max(h - lr * g[3], min_size),
    )


def _mean(values: np.ndarray) -> float:
    # exactly rounded, so the reduction order is irrelevant
    return math.fsum(values.tolist()) / len(values)


def run(
    config: SimConfig,
    spec: LossSpec,
    *,
    cases: CaseSet | None = None,
    workers: int = 1,
    backend: Backend | None = None,
    progress: Callable[[CurveRecord], None] | None = None,
) -> SimRun:
    """Descend every case for ``config.iterations`` steps.

    Each iteration evaluates all cases against one tracker snapshot, records
    the means, updates the tracker once and then steps every anchor. A final
    record after the last step closes the curve.
    """
    if cases is None:
        cases = generate_cases(config)
    if len(cases) == 0:
        raise ValueError("empty case set")
    anchors = cases.anchors()
    targets = cases.targets()
    tracker = EmaTracker(mean=1.0, momentum=config.ema_momentum) if spec.needs_tracker else None
    result = SimRun(config, spec)

    for it in range(config.iterations + 1):
        iou, loss, grad = evaluate_batch(
            spec.base, anchors, targets, spec.epsilon, workers=workers, backend=backend
        )
        if spec.fm is not None:
            coeff = spec.fm.coefficient(iou, tracker.mean)
            loss = loss * coeff
            grad = grad * coeff[:, None]
        _check_finite(grad, cases.ids, spec)
        mean_iou = _mean(iou)
        record = CurveRecord(it, mean_iou, _mean(loss), spec.name)
        result.records.append(record)
        if progress is not None:
            progress(record)
        if it == config.iterations:
            break
        if tracker is not None:
            tracker = tracker.update(min(max(mean_iou, 0.0), 1.0))
        anchors -= config.lr * grad
        np.maximum(anchors[:, 2:], config.min_size, out=anchors[:, 2:])

    result.final_anchors = anchors
    return result


@dataclass(frozen=True)
class ReportRow:
    loss: str
    final_mean_iou_loss: float
    final_mean_training_loss: float
    iterations_to_threshold: int | None


def final_report(runs: Sequence[SimRun], threshold: float = 0.2) -> list[ReportRow]:
    """Rank runs by final mean IoU loss (ties broken by speed to ``threshold``)."""
    if not runs:
        raise ValueError("no runs to report")
    ref = runs[0].config
    for r in runs[1:]:
        if r.config != ref:
            raise ValueError(f"run {r.spec.name} used a different configuration than {runs[0].spec.name}")
    rows = [
        ReportRow(
            r.spec.name,
            r.final_mean_iou_loss,
            r.records[-1].mean_training_loss,
            r.iterations_to(threshold),
        )
        for r in runs
    ]
    never = ref.iterations + 1
    rows.sort(key=lambda row: (row.final_mean_iou_loss, row.iterations_to_threshold or never, row.loss))
    return rows
