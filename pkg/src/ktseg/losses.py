"""Training loss: weighted sum of binary cross-entropy and soft-DICE.

    loss = (1 - w) * BCE(pred, target) + w * DICE(pred, target)

with equal weight (w = 0.5) by default. BCE uses mean reduction so both
terms are of comparable magnitude. All functions return the loss value
together with its analytic gradient with respect to the predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ValidationError


@dataclass(frozen=True)
class LossConfig:
    dice_weight: float = 0.5  # w above: 0 = pure BCE, 1 = pure DICE
    smooth: float = 1e-6      # DICE smoothing, rescues the empty/empty case
    prob_clamp: float = 1e-7  # BCE probability clamp away from {0, 1}

    def __post_init__(self):
        if not 0.0 <= self.dice_weight <= 1.0:
            raise ConfigError(f"dice_weight must be in [0, 1], got {self.dice_weight}")
        if not self.smooth > 0.0:
            raise ConfigError(f"smooth must be positive, got {self.smooth}")
        if not 0.0 < self.prob_clamp < 0.5:
            raise ConfigError(f"prob_clamp must be in (0, 0.5), got {self.prob_clamp}")


@dataclass
class PredictionPair:
    """Flat sigmoid outputs in [0, 1] and binary targets of equal length."""

    pred: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        self.pred = np.asarray(self.pred, dtype=np.float64).ravel()
        self.target = np.asarray(self.target, dtype=np.float64).ravel()
        if self.pred.shape != self.target.shape:
            raise ValidationError(
                f"pred and target lengths differ: {self.pred.size} vs {self.target.size}"
            )
        if self.pred.size and (self.pred.min() < 0.0 or self.pred.max() > 1.0):
            raise ValidationError("predictions outside [0, 1]")
        if self.pred.size and not np.isin(self.target, (0.0, 1.0)).all():
            raise ValidationError("targets must be 0 or 1")


def _require_nonempty(pair: PredictionPair) -> None:
    if pair.pred.size == 0:
        raise ValidationError("empty prediction pair")


def bce(pair: PredictionPair, clamp: float = 1e-7) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient w.r.t. the predictions.

    Predictions are clipped to [clamp, 1-clamp] before the logs; the gradient
    is zero wherever the clip is active (the clipped value is constant there).
    """
    _require_nonempty(pair)
    p, t = pair.pred, pair.target
    n = p.size
    ph = np.clip(p, clamp, 1.0 - clamp)
    value = -float(np.mean(t * np.log(ph) + (1.0 - t) * np.log1p(-ph)))
    grad = -(t / ph - (1.0 - t) / (1.0 - ph)) / n
    grad[(p < clamp) | (p > 1.0 - clamp)] = 0.0
    return value, grad


def dice_loss(pair: PredictionPair, smooth: float = 1e-6) -> tuple[float, np.ndarray]:
    """Soft DICE loss 1 - (2*sum(p*t) + s) / (sum(p) + sum(t) + s) and gradient."""
    _require_nonempty(pair)
    p, t = pair.pred, pair.target
    num = 2.0 * float(np.dot(p, t)) + smooth
    den = float(p.sum() + t.sum()) + smooth
    value = 1.0 - num / den
    # quotient rule: d(num)/dp_i = 2 t_i, d(den)/dp_i = 1
    grad = -(2.0 * t * den - num) / (den * den)
    return value, grad


def combined_loss(pair: PredictionPair, config: LossConfig = LossConfig()) -> tuple[float, np.ndarray]:
    """(1 - w) * BCE + w * DICE, value and gradient."""
    w = config.dice_weight
    bce_v, bce_g = bce(pair, config.prob_clamp)
    dice_v, dice_g = dice_loss(pair, config.smooth)
    return (1.0 - w) * bce_v + w * dice_v, (1.0 - w) * bce_g + w * dice_g
