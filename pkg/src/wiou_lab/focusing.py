"""Focusing coefficients, outlier degree and the running-mean normalizer.

All coefficients here are plain floats: they are computed from detached IoU
losses and enter the loss as constants, so they never carry gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EmaTracker",
    "monotonic_coeff",
    "outlier_degree",
    "gain",
    "ema_update",
    "momentum_from_schedule",
    "gain_curve",
    "peak_outlier_degree",
    "GAIN_PRESETS",
]

# (alpha, delta) pairs used for the WIoU v3 rows of the detector experiments
GAIN_PRESETS: tuple[tuple[float, float], ...] = ((1.4, 5.0), (1.6, 4.0), (1.9, 3.0))


@dataclass(frozen=True)
class EmaTracker:
    """Running mean of the IoU loss.

    ``momentum`` is the weight given to each new batch mean. A momentum of 0
    freezes the mean, which the simulator uses for fixed-normalizer runs.
    """

    mean: float = 1.0
    momentum: float = 0.01

    def __post_init__(self) -> None:
        if not (self.mean > 0 and math.isfinite(self.mean)):
            raise ValueError(f"tracker mean must be positive and finite, got {self.mean!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum!r}")

    def update(self, batch_mean_loss: float) -> "EmaTracker":
        return ema_update(self, batch_mean_loss)


def _check_mean(mean: float) -> None:
    if not mean > 0:
        raise ValueError(f"running mean must be positive, got {mean!r}")


def monotonic_coeff(loss_star, mean: float, gamma: float):
    """``(loss_star / mean) ** gamma``; accepts scalars or numpy arrays."""
    _check_mean(mean)
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma!r}")
    if np.any(np.asarray(loss_star) < 0):
        raise ValueError("loss_star must be non-negative")
    return (loss_star / mean) ** gamma


def outlier_degree(loss_star, mean: float):
    _check_mean(mean)
    if np.any(np.asarray(loss_star) < 0):
        raise ValueError("loss_star must be non-negative")
    return loss_star / mean


def gain(beta, alpha: float, delta: float):
    """Non-monotonic gradient gain ``beta / (delta * alpha**(beta - delta))``.

    Equals 1 at ``beta == delta`` and peaks at ``beta == 1/ln(alpha)``.
    """
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1, got {alpha!r}")
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta!r}")
    if np.any(np.asarray(beta) < 0):
        raise ValueError("beta must be non-negative")
    return beta / (delta * alpha ** (beta - delta))


def peak_outlier_degree(alpha: float) -> float:
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1, got {alpha!r}")
    return 1.0 / math.log(alpha)


def ema_update(tracker: EmaTracker, batch_mean_loss: float) -> EmaTracker:
    if not 0.0 <= batch_mean_loss <= 1.0:
        raise ValueError(f"batch mean IoU loss must lie in [0, 1], got {batch_mean_loss!r}")
    m = tracker.momentum
    mean = (1.0 - m) * tracker.mean + m * batch_mean_loss
    if mean <= 0.0:
        # a zero batch with m close to 1 can underflow; keep the mean usable
        mean = math.ulp(0.0)
    return EmaTracker(mean=mean, momentum=m)


def momentum_from_schedule(t: int, n: int) -> float:
    """Momentum that moves the running mean 95% of the way in ``t*n`` updates."""
    if t < 1 or n < 1:
        raise ValueError(f"need t >= 1 and n >= 1, got t={t!r}, n={n!r}")
    # 1 - 0.05**(1/tn) without cancellation for large tn
    return -math.expm1(math.log(0.05) / (t * n))


def gain_curve(alpha: float, delta: float, beta_max: float, steps: int) -> list[tuple[float, float]]:
    if steps < 2:
        raise ValueError("steps must be at least 2")
    if not beta_max > 0:
        raise ValueError("beta_max must be positive")
    betas = np.linspace(0.0, beta_max, steps)
    rs = gain(betas, alpha, delta)
    rows = [(float(b), float(r)) for b, r in zip(betas, rs)]
    return rows
