"""Simulation configuration and regression-case generation.

Anchor points are drawn uniformly in a disc around the common target center.
Every point carries one anchor per (scale, aspect ratio) and each anchor is
paired with every target, so a case id decomposes as
``((point * n_scales + scale) * n_ratios + ratio) * n_targets + target``.
Box arrays are only built on request, which keeps counting cheap.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from ..geometry import BBox

DEFAULT_SCALES = (1 / 32, 1 / 24, 3 / 64, 1 / 16, 1 / 12, 3 / 32, 1 / 8)
DEFAULT_RATIOS = (1 / 4, 1 / 3, 1 / 2, 1.0, 2.0, 3.0, 4.0)
CENTER = (0.5, 0.5)


@dataclass(frozen=True)
class SimConfig:
    radius: float = 0.5
    points_density: int = 20000
    scales: tuple[float, ...] = DEFAULT_SCALES
    aspect_ratios: tuple[float, ...] = DEFAULT_RATIOS
    target_aspect_ratios: tuple[float, ...] = DEFAULT_RATIOS
    target_area: float = 1 / 32
    lr: float = 0.01
    iterations: int = 200
    seed: int = 0
    subsample: float = 1.0
    ema_momentum: float = 0.01
    min_size: float = 1e-6

    def __post_init__(self) -> None:
        for name in ("scales", "aspect_ratios", "target_aspect_ratios"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not 0 < self.radius <= 0.5:
            raise ValueError(f"radius must lie in (0, 0.5], got {self.radius!r}")
        if self.points_density < 1:
            raise ValueError("points_density must be positive")
        if not (self.scales and self.aspect_ratios and self.target_aspect_ratios):
            raise ValueError("scales and aspect ratios must be non-empty")
        if min(self.scales + self.aspect_ratios + self.target_aspect_ratios) <= 0:
            raise ValueError("scales and aspect ratios must be positive")
        if not self.target_area > 0:
            raise ValueError("target_area must be positive")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if not 0 < self.subsample <= 1:
            raise ValueError(f"subsample must lie in (0, 1], got {self.subsample!r}")
        if not 0 <= self.ema_momentum < 1:
            raise ValueError("ema_momentum must lie in [0, 1)")
        if not self.min_size > 0:
            raise ValueError("min_size must be positive")

    @property
    def n_points(self) -> int:
        return int(round(self.points_density * self.radius**2))

    @property
    def cases_per_point(self) -> int:
        return len(self.scales) * len(self.aspect_ratios) * len(self.target_aspect_ratios)

    def to_dict(self) -> dict:
        return asdict(self)


def case_count(config: SimConfig) -> int:
    """Number of cases before subsampling."""
    return config.n_points * config.cases_per_point


@dataclass(frozen=True)
class RegressionCase:
    id: int
    anchor: BBox
    target: BBox


def sample_disc(n: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    """``n`` points uniform in the disc around ``CENTER`` (rejection from the square)."""
    found: list[np.ndarray] = []
    have = 0
    while have < n:
        batch = rng.uniform(-radius, radius, size=(max(2 * (n - have), 16), 2))
        inside = batch[(batch**2).sum(axis=1) <= radius * radius]
        found.append(inside)
        have += len(inside)
    pts = np.concatenate(found)[:n]
    return pts + np.asarray(CENTER)


def box_sizes(area, ratio):
    """Width and height of a box with the given area and width:height ratio."""
    return np.sqrt(np.multiply(area, ratio)), np.sqrt(np.divide(area, ratio))


@dataclass
class CaseSet:
    config: SimConfig
    points: np.ndarray
    ids: np.ndarray
    _anchors: np.ndarray | None = field(default=None, repr=False)
    _targets: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.ids)

    def _indices(self):
        cfg = self.config
        nt, nr = len(cfg.target_aspect_ratios), len(cfg.aspect_ratios)
        rest, t_idx = np.divmod(self.ids, nt)
        rest, r_idx = np.divmod(rest, nr)
        p_idx, s_idx = np.divmod(rest, len(cfg.scales))
        return p_idx, s_idx, r_idx, t_idx

    def anchors(self) -> np.ndarray:
        """``(N, 4)`` initial anchors as ``x, y, w, h``."""
        if self._anchors is None:
            cfg = self.config
            p_idx, s_idx, r_idx, _ = self._indices()
            w, h = box_sizes(np.asarray(cfg.scales)[s_idx], np.asarray(cfg.aspect_ratios)[r_idx])
            pts = self.points[p_idx]
            self._anchors = np.column_stack([pts[:, 0], pts[:, 1], w, h])
        return self._anchors.copy()

    def targets(self) -> np.ndarray:
        if self._targets is None:
            cfg = self.config
            t_idx = self._indices()[3]
            w, h = box_sizes(cfg.target_area, np.asarray(cfg.target_aspect_ratios)[t_idx])
            n = len(self.ids)
            self._targets = np.column_stack([np.full(n, CENTER[0]), np.full(n, CENTER[1]), w, h])
        return self._targets.copy()

    def __getitem__(self, k: int) -> RegressionCase:
        a = self.anchors()[k] if self._anchors is None else self._anchors[k]
        t = self.targets()[k] if self._targets is None else self._targets[k]
        return RegressionCase(int(self.ids[k]), BBox(*map(float, a)), BBox(*map(float, t)))

    def __iter__(self) -> Iterator[RegressionCase]:
        anchors, targets = self.anchors(), self.targets()
        for k, cid in enumerate(self.ids):
            yield RegressionCase(int(cid), BBox(*map(float, anchors[k])), BBox(*map(float, targets[k])))


def generate_cases(config: SimConfig) -> CaseSet:
    """Deterministic case set for ``config``; box arrays are built lazily."""
    rng = np.random.default_rng([config.seed, 0])
    points = sample_disc(config.n_points, config.radius, rng)
    total = case_count(config)
    if config.subsample < 1.0:
        keep = int(round(config.subsample * total))
        ids = np.sort(np.random.default_rng([config.seed, 1]).choice(total, size=keep, replace=False))
    else:
        ids = np.arange(total, dtype=np.int64)
    return CaseSet(config, points, ids.astype(np.int64))


def point_in_target_union(points: np.ndarray, config: SimConfig) -> np.ndarray:
    """Mask of points covered by at least one target box."""
    w, h = box_sizes(config.target_area, np.asarray(config.target_aspect_ratios))
    off = np.abs(np.asarray(points) - np.asarray(CENTER))
    inside = (off[:, None, 0] <= w[None, :] / 2) & (off[:, None, 1] <= h[None, :] / 2)
    return inside.any(axis=1)


def disc_covered_by_targets(config: SimConfig) -> bool:
    """Whether the whole anchor disc lies inside the union of the targets.

    The union of centered boxes is a staircase; the disc fits iff every
    outer corner of the staircase lies outside the disc.
    """
    w, h = box_sizes(config.target_area, np.asarray(config.target_aspect_ratios))
    order = np.argsort(w)
    hw, hh = w[order] / 2, h[order] / 2
    r = config.radius
    if hw[-1] < r or hh.max() < r:
        return False
    # corners between consecutive steps, sorted by half-width
    for k in range(len(hw)):
        reach_h = hh[k:].max()
        lo_w = hw[k - 1] if k else 0.0
        # on the strip lo_w < |dx| <= hw[k], coverage height is max(hh[k:])
        if math.hypot(lo_w, reach_h) < r:
            return False
    return True
