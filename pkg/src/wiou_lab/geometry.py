"""Axis-aligned box algebra on the tape: overlap, union, enclosing box, IoU loss."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

from . import gradtape as gt
from .gradtape import Node

__all__ = ["BBox", "TapeBox", "EnclosureGeom", "as_tape_box", "enclosure", "iou_loss"]


@dataclass(frozen=True)
class BBox:
    """Center ``(x, y)`` and size ``(w, h)`` in unit-square coordinates."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"BBox.{name} must be finite")
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"BBox needs w > 0 and h > 0, got w={self.w!r}, h={self.h!r}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    def scaled(self, k: float) -> "BBox":
        return BBox(self.x * k, self.y * k, self.w * k, self.h * k)


class TapeBox(NamedTuple):
    x: Node
    y: Node
    w: Node
    h: Node

    @classmethod
    def from_box(cls, box: BBox) -> "TapeBox":
        return cls(*(gt.leaf(v) for v in box.as_tuple()))

    def values(self) -> tuple[float, float, float, float]:
        return (self.x.value, self.y.value, self.w.value, self.h.value)


BoxLike = Union[BBox, TapeBox]


def as_tape_box(box: BoxLike) -> TapeBox:
    """Tape view of a box; a plain ``BBox`` gets fresh leaves."""
    if isinstance(box, TapeBox):
        if not (box.w.value > 0 and box.h.value > 0):
            raise ValueError("box needs w > 0 and h > 0")
        return box
    return TapeBox.from_box(box)


@dataclass(frozen=True)
class EnclosureGeom:
    """Overlap extent, union area and smallest enclosing box of a pair."""

    W_i: Node
    H_i: Node
    S_u: Node
    W_g: Node
    H_g: Node

    @property
    def intersection(self) -> float:
        return self.W_i.value * self.H_i.value


def _overlap(lo_a: Node, hi_a: Node, lo_b: Node, hi_b: Node) -> Node:
    raw = gt.minimum(hi_a, hi_b) - gt.maximum(lo_a, lo_b)
    if raw.value <= 0.0:
        # touching or disjoint: flat zero, no gradient path
        return gt.const(0.0)
    return raw


def enclosure(anchor: BoxLike, target: BoxLike) -> EnclosureGeom:
    a, t = as_tape_box(anchor), as_tape_box(target)
    ax1, ax2 = a.x - a.w * 0.5, a.x + a.w * 0.5
    ay1, ay2 = a.y - a.h * 0.5, a.y + a.h * 0.5
    tx1, tx2 = t.x - t.w * 0.5, t.x + t.w * 0.5
    ty1, ty2 = t.y - t.h * 0.5, t.y + t.h * 0.5

    w_i = _overlap(ax1, ax2, tx1, tx2)
    h_i = _overlap(ay1, ay2, ty1, ty2)
    s_u = a.w * a.h + t.w * t.h - w_i * h_i
    w_g = gt.maximum(ax2, tx2) - gt.minimum(ax1, tx1)
    h_g = gt.maximum(ay2, ty2) - gt.minimum(ay1, ty1)
    return EnclosureGeom(w_i, h_i, s_u, w_g, h_g)


def iou_loss(anchor: BoxLike, target: BoxLike, geom: EnclosureGeom | None = None) -> Node:
    """``1 - W_i*H_i / S_u``.

    Pass ``geom`` to reuse an existing enclosure, e.g. to read adjoints of its
    intermediate nodes after ``backward``.
    """
    if geom is None:
        geom = enclosure(anchor, target)
    return 1.0 - geom.W_i * geom.H_i / geom.S_u
