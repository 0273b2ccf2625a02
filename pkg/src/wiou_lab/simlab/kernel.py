"""Backend selection and sliced, optionally threaded, batch evaluation.

The compiled kernel is used when it imports; otherwise the numpy kernel.
``WIOU_LAB_BACKEND=python`` forces the fallback, ``=c`` makes a missing
extension an error.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..losses import Base
from . import _kernel_py

try:
    from . import _kernel_c
except ImportError:  # extension not built
    _kernel_c = None

KIND = {
    Base.IOU: 0,
    Base.GIOU: 1,
    Base.DIOU: 2,
    Base.EIOU: 3,
    Base.CIOU: 4,
    Base.SIOU: 5,
    Base.WIOU1: 6,
}


@dataclass(frozen=True)
class Backend:
    name: str
    evaluate: Callable


PYTHON = Backend("python", _kernel_py.evaluate)
COMPILED = Backend("c", _kernel_c.evaluate) if _kernel_c is not None else None


def available_backends() -> list[str]:
    return ["c", "python"] if COMPILED is not None else ["python"]


def get_backend(name: str | None = None) -> Backend:
    name = (name or os.environ.get("WIOU_LAB_BACKEND") or "auto").lower()
    if name == "python":
        return PYTHON
    if name == "c":
        if COMPILED is None:
            raise RuntimeError("compiled kernel requested but wiou_lab.simlab._kernel_c is not built")
        return COMPILED
    if name == "auto":
        return COMPILED or PYTHON
    raise ValueError(f"unknown backend {name!r}; use auto, c or python")


DEFAULT_BACKEND = get_backend()


def evaluate_batch(
    base: Base,
    anchors: np.ndarray,
    targets: np.ndarray,
    eps: float,
    *,
    workers: int = 1,
    backend: Backend | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """IoU loss, base loss and ``(N, 4)`` anchor gradients for every case.

    Cases are independent, so the slicing across ``workers`` threads cannot
    change any output bit.
    """
    backend = backend or DEFAULT_BACKEND
    anchors = np.ascontiguousarray(anchors, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    n = anchors.shape[0]
    iou = np.empty(n)
    loss = np.empty(n)
    grad = np.empty((n, 4))
    kind = KIND[Base(base)]
    if workers <= 1 or n < 2 * workers:
        backend.evaluate(kind, anchors, targets, eps, iou, loss, grad)
        return iou, loss, grad
    bounds = np.linspace(0, n, workers + 1).astype(np.int64)

    def part(k: int) -> None:
        lo, hi = bounds[k], bounds[k + 1]
        backend.evaluate(kind, anchors[lo:hi], targets[lo:hi], eps, iou[lo:hi], loss[lo:hi], grad[lo:hi])

    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(part, range(workers)))
    return iou, loss, grad
