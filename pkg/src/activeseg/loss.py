"""Focal loss and its pixel-weighted variant, with analytic gradients.

For a probability raster ``p``, binary target ``y`` and weight raster ``w``::

    p_t   = p*y + (1-p)*(1-y)
    a_t   = alpha*y + (1-alpha)*(1-y)
    loss  = mean over pixels of  -w * a_t * (1-p_t)**gamma * log(p_t)

``p`` is clamped to ``[eps, 1-eps]`` before evaluation; the gradient is zero
wherever the clamp is active (including its boundary).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from .dataset import PredictionSet, PseudoLabels, WeightRaster


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.25
    gamma: float = 2.0
    eps: float = 1e-7

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if not self.gamma >= 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not 0.0 < self.eps < 0.5:
            raise ValueError(f"eps must be in (0, 0.5), got {self.eps}")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossResult:
    value: float
    gradient: np.ndarray | None = None


def _prepare(p, y, w):
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y)
    if p.ndim != 2:
        raise ValueError(f"probability raster must be 2-D, got shape {p.shape}")
    if y.shape != p.shape:
        raise ValueError(f"dimension mismatch: p {p.shape} vs y {y.shape}")
    if not np.isfinite(p).all() or p.min() < 0.0 or p.max() > 1.0:
        raise ValueError("probabilities must lie in [0, 1]")
    if y.dtype != bool:
        if not np.isin(y, (0, 1)).all():
            raise ValueError("targets must be binary")
        y = y.astype(bool)
    if w is None:
        w = np.ones(p.shape)
    else:
        w = np.asarray(w.values if isinstance(w, WeightRaster) else w, dtype=np.float64)
        if w.shape != p.shape:
            raise ValueError(f"dimension mismatch: p {p.shape} vs w {w.shape}")
        if not (w > 0).all():
            raise ValueError("weights must be positive")
    return p, y, w


def pixel_terms(p, y, config: LossConfig = LossConfig()) -> np.ndarray:
    """Unweighted per-pixel focal terms ``-a_t (1-p_t)^gamma log p_t``."""
    p, y, _ = _prepare(p, y, None)
    return _terms(p, y, config)


def _terms(p, y, config):
    pc = np.clip(p, config.eps, 1.0 - config.eps)
    p_t = np.where(y, pc, 1.0 - pc)
    a_t = np.where(y, config.alpha, 1.0 - config.alpha)
    return -a_t * (1.0 - p_t) ** config.gamma * np.log(p_t)


def _gradient(p, y, w, config):
    pc = np.clip(p, config.eps, 1.0 - config.eps)
    p_t = np.where(y, pc, 1.0 - pc)
    a_t = np.where(y, config.alpha, 1.0 - config.alpha)
    g = config.gamma
    q = 1.0 - p_t
    # d/dp_t of -(1-p_t)^g log p_t; at g == 0 the first term vanishes
    first = g * q ** (g - 1.0) * np.log(p_t) if g != 0 else 0.0
    d_pt = a_t * (first - q ** g / p_t)
    grad = np.where(y, d_pt, -d_pt) * w / p.size
    active = (p <= config.eps) | (p >= 1.0 - config.eps)
    grad[active] = 0.0
    return grad


def action_guided_focal_loss(p, y, w, config: LossConfig = LossConfig(),
                             gradient: bool = False) -> LossResult:
    p, y, w = _prepare(p, y, w)
    value = float(np.mean(w * _terms(p, y, config)))
    grad = _gradient(p, y, w, config) if gradient else None
    return LossResult(value, grad)


def focal_loss(p, y, config: LossConfig = LossConfig(), gradient: bool = False) -> LossResult:
    return action_guided_focal_loss(p, y, None, config, gradient)


def loss_gradient(p, y, w, config: LossConfig = LossConfig()) -> np.ndarray:
    p, y, w = _prepare(p, y, w)
    return _gradient(p, y, w, config)


@dataclass
class ClipLoss:
    clip_id: str
    per_frame: dict[tuple[int, int], float]
    per_object: dict[int, float]
    aggregate: float
    gradients: dict[tuple[int, int], np.ndarray] | None = None


def clip_loss(predictions: PredictionSet, pseudo: PseudoLabels,
              weights: Mapping[tuple[int, int], WeightRaster],
              config: LossConfig = LossConfig(), gradient: bool = False) -> ClipLoss:
    """Weighted focal loss for every (object, frame) pair carrying a pseudo-label.

    ``weights`` is keyed by ``(object_id, t)``. The aggregate is the unweighted
    mean over pairs; per-object values average that object's frames.
    """
    if predictions.clip_id != pseudo.clip_id:
        raise ValueError(f"clip mismatch: {predictions.clip_id!r} vs {pseudo.clip_id!r}")
    per_frame, grads = {}, {}
    for oid in sorted(pseudo.masks):
        for t in sorted(pseudo.masks[oid]):
            if (oid, t) not in weights:
                raise KeyError(f"clip {pseudo.clip_id!r}: no weight raster for object {oid} frame {t}")
            res = action_guided_focal_loss(
                predictions.probability(oid, t), pseudo.masks[oid][t], weights[(oid, t)],
                config, gradient,
            )
            per_frame[(oid, t)] = res.value
            if gradient:
                grads[(oid, t)] = res.gradient
    if not per_frame:
        raise ValueError(f"clip {pseudo.clip_id!r}: no labeled (object, frame) pairs")
    per_object = {}
    for oid in sorted(pseudo.masks):
        vals = [v for (o, _), v in per_frame.items() if o == oid]
        if vals:
            per_object[oid] = float(np.mean(vals))
    aggregate = float(np.mean(list(per_frame.values())))
    return ClipLoss(pseudo.clip_id, per_frame, per_object, aggregate, grads if gradient else None)
