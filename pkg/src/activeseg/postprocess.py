"""Inference-time gating of predicted masks by classification score."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dataset import PredictionSet

DECISION_SOURCES = ("auto", "score", "mask-nonempty")


@dataclass(frozen=True)
class PostprocessConfig:
    """``theta`` gates on ``score >= theta``; rasters binarize on ``p > binarize_at``.

    ``decision_source="auto"`` uses the score when an object has one and mask
    emptiness otherwise.
    """

    theta: float = 0.75
    decision_source: str = "auto"
    binarize_at: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must be in [0, 1], got {self.theta}")
        if self.decision_source not in DECISION_SOURCES:
            raise ValueError(f"decision_source must be one of {DECISION_SOURCES}")
        if not 0.0 <= self.binarize_at < 1.0:
            raise ValueError(f"binarize_at must be in [0, 1), got {self.binarize_at}")

    def as_dict(self) -> dict:
        return asdict(self)


def binarize(raster: np.ndarray, at: float = 0.5) -> np.ndarray:
    arr = np.asarray(raster)
    if arr.dtype == bool:
        return arr.copy()
    return arr > at


def apply_threshold(pred: PredictionSet, config: PostprocessConfig = PostprocessConfig()) -> PredictionSet:
    """Binarize every raster and zero all frames of objects scored below ``theta``."""
    out = PredictionSet(pred.clip_id, pred.height, pred.width, tuple(pred.frame_ids),
                        dict(pred.scores), {})
    for oid, frames in pred.rasters.items():
        score = pred.scores.get(oid)
        gated = score is not None and score < config.theta
        out.rasters[oid] = {
            t: np.zeros(arr.shape, dtype=bool) if gated else binarize(arr, config.binarize_at)
            for t, arr in frames.items()
        }
    return out


def predicted_positive(pred: PredictionSet, object_id: int,
                       config: PostprocessConfig = PostprocessConfig()) -> int:
    """Predicted involvement bit of an object in post-processed predictions."""
    if object_id not in pred.scores and object_id not in pred.rasters:
        raise KeyError(f"clip {pred.clip_id!r}: no prediction for object {object_id}")
    score = pred.scores.get(object_id)
    source = config.decision_source
    if source == "auto":
        source = "score" if score is not None else "mask-nonempty"
    if source == "score":
        if score is None:
            raise ValueError(f"clip {pred.clip_id!r}: object {object_id} has no score")
        return int(score >= config.theta)
    frames = pred.rasters.get(object_id, {})
    return int(any(binarize(m, config.binarize_at).any() for m in frames.values()))
