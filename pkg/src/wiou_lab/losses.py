"""IoU-family penalty terms and composed regression losses.

Additive bases are ``L_IoU + R``; WIoU v1 is multiplicative. A focusing
mechanism multiplies any base by a coefficient computed from the detached IoU
loss and the tracker mean.

Detached quantities (the CIoU trade-off weight, the WIoU enclosing diagonal,
the focusing coefficient) can be pinned through ``frozen`` so that a
finite-difference probe sees them as the constants the gradient assumes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np

from . import focusing
from . import gradtape as gt
from .geometry import BBox, BoxLike, EnclosureGeom, TapeBox, as_tape_box, enclosure, iou_loss
from .gradtape import Node

__all__ = [
    "Base",
    "Monotonic",
    "NonMonotonic",
    "LossSpec",
    "Composed",
    "SIOU_EPS",
    "SHAPE_THETA",
    "LOSS_NAMES",
    "parse_loss",
    "r_diou",
    "r_eiou",
    "aspect_v",
    "ciou_alpha",
    "r_ciou",
    "siou_angle",
    "siou_distance",
    "siou_shape",
    "r_siou",
    "giou_penalty",
    "wiou_attention",
    "wiou_v1",
    "base_loss",
    "compose",
    "loss_value",
]

SIOU_EPS = 1e-7
SHAPE_THETA = 4
_ASPECT_K = 4.0 / math.pi**2


class Base(str, enum.Enum):
    IOU = "iou"
    GIOU = "giou"
    DIOU = "diou"
    EIOU = "eiou"
    CIOU = "ciou"
    SIOU = "siou"
    WIOU1 = "wiou1"


def _clip_rounding(loss_star):
    # coincident boxes can give an IoU loss a few ulp below zero
    return np.maximum(loss_star, 0.0) if isinstance(loss_star, np.ndarray) else max(loss_star, 0.0)


@dataclass(frozen=True)
class Monotonic:
    gamma: float = 0.5

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma!r}")

    def coefficient(self, loss_star, mean: float):
        return focusing.monotonic_coeff(_clip_rounding(loss_star), mean, self.gamma)


@dataclass(frozen=True)
class NonMonotonic:
    alpha: float = 1.9
    delta: float = 3.0

    def __post_init__(self) -> None:
        if not self.alpha > 1:
            raise ValueError(f"alpha must exceed 1, got {self.alpha!r}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta!r}")

    def coefficient(self, loss_star, mean: float):
        beta = focusing.outlier_degree(_clip_rounding(loss_star), mean)
        return focusing.gain(beta, self.alpha, self.delta)


FocusingMechanism = Union[Monotonic, NonMonotonic]


@dataclass(frozen=True)
class LossSpec:
    base: Base = Base.IOU
    fm: Optional[FocusingMechanism] = None
    epsilon: float = SIOU_EPS
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "base", Base(self.base))
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.name:
            object.__setattr__(self, "name", _default_name(self.base, self.fm))

    @property
    def needs_tracker(self) -> bool:
        return self.fm is not None

    def snapshot(self) -> dict:
        fm = None
        if isinstance(self.fm, Monotonic):
            fm = {"kind": "monotonic", "gamma": self.fm.gamma}
        elif isinstance(self.fm, NonMonotonic):
            fm = {"kind": "non-monotonic", "alpha": self.fm.alpha, "delta": self.fm.delta}
        return {"name": self.name, "base": self.base.value, "fm": fm, "epsilon": self.epsilon}


def _default_name(base: Base, fm: Optional[FocusingMechanism]) -> str:
    if fm is None:
        return base.value
    if base is Base.WIOU1:
        return "wiou2" if isinstance(fm, Monotonic) else "wiou3"
    suffix = "mono" if isinstance(fm, Monotonic) else "nonmono"
    return f"{base.value}-{suffix}"


LOSS_NAMES = ("iou", "giou", "diou", "eiou", "ciou", "siou", "wiou1", "wiou2", "wiou3")


def parse_loss(
    name: str,
    *,
    gamma: float = 0.5,
    alpha: float = 1.9,
    delta: float = 3.0,
    epsilon: float = SIOU_EPS,
) -> LossSpec:
    """Build a spec from a short name.

    Plain base names, ``wiou2``/``wiou3`` for WIoU v1 with the monotonic or
    non-monotonic mechanism, and ``<base>-mono`` / ``<base>-nonmono`` for any
    other base under a mechanism.
    """
    key = name.strip().lower()
    if key == "wiou2":
        return LossSpec(Base.WIOU1, Monotonic(gamma), epsilon)
    if key == "wiou3":
        return LossSpec(Base.WIOU1, NonMonotonic(alpha, delta), epsilon)
    base_key, _, fm_key = key.partition("-")
    try:
        base = Base(base_key)
    except ValueError:
        raise ValueError(f"unknown loss {name!r}; expected one of {', '.join(LOSS_NAMES)}") from None
    if not fm_key:
        return LossSpec(base, None, epsilon)
    if fm_key == "mono":
        return LossSpec(base, Monotonic(gamma), epsilon)
    if fm_key == "nonmono":
        return LossSpec(base, NonMonotonic(alpha, delta), epsilon)
    raise ValueError(f"unknown focusing suffix {fm_key!r} in {name!r}; use -mono or -nonmono")


def _pair(anchor: BoxLike, target: BoxLike, geom: Optional[EnclosureGeom]):
    a, t = as_tape_box(anchor), as_tape_box(target)
    return a, t, (geom if geom is not None else enclosure(a, t))


def _center_dist2(a: TapeBox, t: TapeBox) -> Node:
    return gt.square(a.x - t.x) + gt.square(a.y - t.y)


def r_diou(anchor: BoxLike, target: BoxLike, geom: EnclosureGeom | None = None) -> Node:
    """Squared center distance over the squared enclosing diagonal."""
    a, t, g = _pair(anchor, target, geom)
    return _center_dist2(a, t) / (gt.square(g.W_g) + gt.square(g.H_g))


def r_eiou(anchor: BoxLike, target: BoxLike, geom: EnclosureGeom | None = None) -> Node:
    a, t, g = _pair(anchor, target, geom)
    return (
        r_diou(a, t, g)
        + gt.square(a.x - t.x) / gt.square(g.W_g)
        + gt.square(a.y - t.y) / gt.square(g.H_g)
    )


def aspect_v(anchor: BoxLike, target: BoxLike) -> Node:
    a, t = as_tape_box(anchor), as_tape_box(target)
    diff = gt.arctan(a.w / a.h) - gt.arctan(t.w / t.h)
    return _ASPECT_K * gt.square(diff)


def ciou_alpha(iou_value: float, v_value: float) -> float:
    denom = iou_value + v_value
    return 0.0 if denom == 0.0 else v_value / denom


def r_ciou(
    anchor: BoxLike,
    target: BoxLike,
    geom: EnclosureGeom | None = None,
    frozen: Mapping[str, float] | None = None,
    record: dict | None = None,
) -> Node:
    """DIoU penalty plus ``alpha * v``; ``alpha`` is a constant weight."""
    a, t, g = _pair(anchor, target, geom)
    v = aspect_v(a, t)
    if frozen is not None and "ciou_alpha" in frozen:
        alpha = frozen["ciou_alpha"]
    else:
        alpha = ciou_alpha(iou_loss(a, t, g).value, v.value)
    if record is not None:
        record["ciou_alpha"] = alpha
    return r_diou(a, t, g) + alpha * v


def siou_angle(anchor: BoxLike, target: BoxLike, eps: float = SIOU_EPS) -> Node:
    a, t = as_tape_box(anchor), as_tape_box(target)
    dx, dy = a.x - t.x, a.y - t.y
    dist = gt.sqrt(gt.square(dx) + gt.square(dy))
    ratio = gt.minimum(gt.absolute(dx), gt.absolute(dy)) / (dist + eps)
    return gt.sin(2.0 * gt.arcsin(ratio))


def siou_distance(
    anchor: BoxLike, target: BoxLike, angle: Node, geom: EnclosureGeom | None = None
) -> Node:
    a, t, g = _pair(anchor, target, geom)
    gamma = 2.0 - angle
    rho_x = gt.square((a.x - t.x) / g.W_g)
    rho_y = gt.square((a.y - t.y) / g.H_g)
    return 0.5 * ((1.0 - gt.exp(-(gamma * rho_x))) + (1.0 - gt.exp(-(gamma * rho_y))))


def _shape_term(size: Node, size_gt: Node) -> Node:
    omega = gt.absolute(size - size_gt) / gt.maximum(size, size_gt)
    return gt.power(1.0 - gt.exp(-omega), SHAPE_THETA)


def siou_shape(anchor: BoxLike, target: BoxLike) -> Node:
    a, t = as_tape_box(anchor), as_tape_box(target)
    return 0.5 * (_shape_term(a.w, t.w) + _shape_term(a.h, t.h))


def r_siou(
    anchor: BoxLike, target: BoxLike, eps: float = SIOU_EPS, geom: EnclosureGeom | None = None
) -> Node:
    a, t, g = _pair(anchor, target, geom)
    return siou_distance(a, t, siou_angle(a, t, eps), g) + siou_shape(a, t)


def giou_penalty(anchor: BoxLike, target: BoxLike, geom: EnclosureGeom | None = None) -> Node:
    """Share of the enclosing box not covered by the union."""
    _, _, g = _pair(anchor, target, geom)
    area = g.W_g * g.H_g
    return (area - g.S_u) / area


def wiou_attention(
    anchor: BoxLike,
    target: BoxLike,
    geom: EnclosureGeom | None = None,
    frozen: Mapping[str, float] | None = None,
    record: dict | None = None,
) -> Node:
    """``exp(d^2 / (W_g^2 + H_g^2))`` with the enclosing diagonal detached."""
    a, t, g = _pair(anchor, target, geom)
    diag2 = gt.square(g.W_g) + gt.square(g.H_g)
    if frozen is not None and "wiou_diag2" in frozen:
        denom = gt.const(frozen["wiou_diag2"])
    else:
        denom = gt.detach(diag2)
    if record is not None:
        record["wiou_diag2"] = denom.value
    return gt.exp(_center_dist2(a, t) / denom)


def wiou_v1(
    anchor: BoxLike,
    target: BoxLike,
    geom: EnclosureGeom | None = None,
    frozen: Mapping[str, float] | None = None,
    record: dict | None = None,
) -> Node:
    a, t, g = _pair(anchor, target, geom)
    return wiou_attention(a, t, g, frozen, record) * iou_loss(a, t, g)


def base_loss(
    base: Base | str,
    anchor: BoxLike,
    target: BoxLike,
    *,
    eps: float = SIOU_EPS,
    geom: EnclosureGeom | None = None,
    frozen: Mapping[str, float] | None = None,
    record: dict | None = None,
) -> tuple[Node, Node]:
    """Return ``(loss, iou_loss)`` for an unwrapped base."""
    base = Base(base)
    a, t, g = _pair(anchor, target, geom)
    liou = iou_loss(a, t, g)
    if base is Base.IOU:
        return liou, liou
    if base is Base.WIOU1:
        return wiou_attention(a, t, g, frozen, record) * liou, liou
    if base is Base.GIOU:
        penalty = giou_penalty(a, t, g)
    elif base is Base.DIOU:
        penalty = r_diou(a, t, g)
    elif base is Base.EIOU:
        penalty = r_eiou(a, t, g)
    elif base is Base.CIOU:
        penalty = r_ciou(a, t, g, frozen, record)
    else:
        penalty = r_siou(a, t, eps, g)
    return liou + penalty, liou


@dataclass
class Composed:
    loss: Node
    grads: tuple[float, float, float, float]
    iou_loss: float
    coefficient: float
    frozen: dict[str, float]
    anchor: TapeBox

    @property
    def value(self) -> float:
        return self.loss.value


def _forward(spec, a, t, tracker, frozen, record):
    loss, liou = base_loss(spec.base, a, t, eps=spec.epsilon, frozen=frozen, record=record)
    if spec.fm is None:
        return loss, liou, 1.0
    if frozen is not None and "fm_coeff" in frozen:
        coefficient = frozen["fm_coeff"]
    else:
        if tracker is None:
            raise ValueError(f"{spec.name} uses a focusing mechanism and needs a tracker")
        coefficient = float(spec.fm.coefficient(liou.value, tracker.mean))
    record["fm_coeff"] = coefficient
    return coefficient * loss, liou, coefficient


def _const_box(box: BoxLike) -> TapeBox:
    if isinstance(box, TapeBox):
        return box
    return TapeBox(*(gt.const(v) for v in box.as_tuple()))


def compose(
    spec: LossSpec,
    anchor: BoxLike,
    target: BoxLike,
    tracker: focusing.EmaTracker | None = None,
    frozen: Mapping[str, float] | None = None,
) -> Composed:
    """Assemble the loss for ``spec`` and differentiate it w.r.t. the anchor.

    ``Composed.frozen`` holds every detached value used; feeding it back via
    ``frozen`` reproduces the same constants at a perturbed anchor.
    """
    a = as_tape_box(anchor)
    record: dict[str, float] = {}
    loss, liou, coefficient = _forward(spec, a, _const_box(target), tracker, frozen, record)
    grads = gt.backward(loss, a, strict=False)
    return Composed(loss, tuple(grads), liou.value, coefficient, record, a)


def loss_value(
    spec: LossSpec,
    anchor: BBox | tuple,
    target: BBox,
    tracker: focusing.EmaTracker | None = None,
    frozen: Mapping[str, float] | None = None,
) -> float:
    """Forward value only, for finite-difference probes."""
    if not isinstance(anchor, BBox):
        anchor = BBox(*anchor)
    loss, _, _ = _forward(spec, TapeBox.from_box(anchor), _const_box(target), tracker, frozen, {})
    return loss.value
