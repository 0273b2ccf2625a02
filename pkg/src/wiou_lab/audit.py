"""Finite-difference audit of composed-loss gradients.

The probe evaluates the forward pass only, with every detached quantity
pinned to its value at the base point, and differentiates numerically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .focusing import EmaTracker
from .geometry import BBox
from .losses import LossSpec, compose, loss_value

# relative error is measured against max(|fd|, FLOOR); at tolerance 1e-5 this
# makes the near-zero check an absolute 1e-8
FLOOR = 1e-3
# random pairs closer than this to a kink (edge contact, tie, zero offset) are redrawn
KINK_MARGIN = 1e-4


def _near_kink(a: np.ndarray, t: np.ndarray) -> bool:
    x, y, w, h = a
    xg, yg, wg, hg = t
    edges = [
        (x - w / 2, xg - wg / 2),
        (x + w / 2, xg + wg / 2),
        (x - w / 2, xg + wg / 2),
        (x + w / 2, xg - wg / 2),
        (y - h / 2, yg - hg / 2),
        (y + h / 2, yg + hg / 2),
        (y - h / 2, yg + hg / 2),
        (y + h / 2, yg - hg / 2),
        (abs(x - xg), abs(y - yg)),
        (w, wg),
        (h, hg),
        (x, xg),
        (y, yg),
    ]
    return any(abs(p - q) < KINK_MARGIN for p, q in edges)


def _disjoint(a: np.ndarray, t: np.ndarray) -> bool:
    return abs(a[0] - t[0]) > (a[2] + t[2]) / 2 or abs(a[1] - t[1]) > (a[3] + t[3]) / 2


def random_pairs(
    n: int, seed: int, *, disjoint_only: bool = False, overlapping_only: bool = False
) -> list[tuple[BBox, BBox]]:
    """Seeded (anchor, target) pairs in the unit square, half of them disjoint."""
    if disjoint_only and overlapping_only:
        raise ValueError("disjoint_only and overlapping_only are exclusive")
    rng = np.random.default_rng(seed)
    pairs: list[tuple[BBox, BBox]] = []
    while len(pairs) < n:
        want_disjoint = disjoint_only or (not overlapping_only and len(pairs) % 2 == 1)
        t = np.array([*rng.uniform(0.3, 0.7, 2), *rng.uniform(0.03, 0.4, 2)])
        size = rng.uniform(0.03, 0.4, 2)
        if want_disjoint:
            center = rng.uniform(0.0, 1.0, 2)
        else:
            center = t[:2] + rng.uniform(-0.5, 0.5, 2) * (size + t[2:]) / 2
        a = np.array([*center, *size])
        if _near_kink(a, t) or _disjoint(a, t) != want_disjoint:
            continue
        pairs.append((BBox(*a), BBox(*t)))
    return pairs


def fd_gradient(
    spec: LossSpec,
    anchor: BBox,
    target: BBox,
    tracker: EmaTracker | None,
    frozen: dict[str, float] | None,
    step: float = 1e-6,
) -> np.ndarray:
    base = np.array(anchor.as_tuple())
    out = np.empty(4)
    for k in range(4):
        up, down = base.copy(), base.copy()
        up[k] += step
        down[k] -= step
        f_up = loss_value(spec, tuple(up), target, tracker, frozen)
        f_down = loss_value(spec, tuple(down), target, tracker, frozen)
        out[k] = (f_up - f_down) / (2 * step)
    return out


def gradient_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(np.asarray(analytic) - numeric) / np.maximum(np.abs(numeric), FLOOR)


@dataclass(frozen=True)
class GradCheckResult:
    loss: str
    cases: int
    max_error: float
    max_abs_grad: float
    worst_case: int

    @property
    def all_zero(self) -> bool:
        return self.max_abs_grad == 0.0

    def passed(self, tolerance: float) -> bool:
        return self.max_error <= tolerance


def check_gradients(
    spec: LossSpec,
    pairs: Sequence[tuple[BBox, BBox]],
    tracker: EmaTracker | None = None,
    step: float = 1e-6,
) -> GradCheckResult:
    if spec.needs_tracker and tracker is None:
        tracker = EmaTracker(mean=0.6, momentum=0.01)
    worst, worst_k, max_grad = 0.0, -1, 0.0
    for k, (anchor, target) in enumerate(pairs):
        composed = compose(spec, anchor, target, tracker)
        fd = fd_gradient(spec, anchor, target, tracker, composed.frozen, step)
        err = float(gradient_error(composed.grads, fd).max())
        max_grad = max(max_grad, max(abs(g) for g in composed.grads))
        if err > worst or worst_k < 0:
            worst, worst_k = err, k
    return GradCheckResult(spec.name, len(pairs), worst, max_grad, worst_k)


def check_all(
    specs: Iterable[LossSpec], pairs: Sequence[tuple[BBox, BBox]], step: float = 1e-6
) -> list[GradCheckResult]:
    return [check_gradients(spec, pairs, step=step) for spec in specs]
