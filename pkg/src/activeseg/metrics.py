"""Positive/negative segmentation metrics and involvement accuracy.

Each evaluated object has a ground-truth positivity bit and an annotated
region per frame. Positive and negative objects are both scored against their
region, so ``n_miou``/``n_ciou`` measure how much of the inactive objects got
segmented anyway (lower is better).

* ``p_miou``/``n_miou``: mean per-object IoU over positive/negative objects.
  Per-object IoU pools intersections and unions over all frames.
* ``p_ciou``/``n_ciou``: intersections over unions pooled over every object
  and frame of the group.
* ``giou``: mean over all objects of the IoU (positives) or of 1/0 for an
  empty/nonempty prediction across all frames (negatives).
* ``acc``: ``(TP + TN) / (TP + TN + FP + FN)`` on predicted involvement bits.

An empty group reports 0.0 for its mIoU and cIoU.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dataset import ActionClip, PredictionSet
from .masks import MaskError, as_mask
from .postprocess import PostprocessConfig, binarize, predicted_positive

METRICS = ("p_miou", "n_miou", "p_ciou", "n_ciou", "giou", "acc")


@dataclass(eq=False)
class EvalLabels:
    clip_id: str
    positive: dict[int, int]
    regions: dict[int, dict[int, np.ndarray]]

    @classmethod
    def from_clip(cls, clip: ActionClip, positive: dict[int, int]) -> "EvalLabels":
        regions = {
            o.id: {f.t: f.label_map == o.id for f in clip.frames} for o in clip.objects
        }
        return cls(clip.clip_id, dict(positive), regions)


@dataclass
class ObjectRow:
    clip_id: str
    object_id: int
    positive: int
    iou: float
    giou: float
    predicted: int
    intersection: int
    union: int


@dataclass
class MetricReport:
    p_miou: float
    n_miou: float
    p_ciou: float
    n_ciou: float
    giou: float
    acc: float
    tp: int
    tn: int
    fp: int
    fn: int
    rows: list[ObjectRow] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def metrics(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in METRICS}

    def as_dict(self) -> dict:
        d = asdict(self)
        d["counts"] = {k: d.pop(k) for k in ("tp", "tn", "fp", "fn")}
        d["objects"] = d.pop("rows")
        return d


def _overlap(pred: np.ndarray, gt: np.ndarray) -> tuple[int, int]:
    if pred.shape != gt.shape:
        raise MaskError(f"dimension mismatch: {pred.shape} vs {gt.shape}")
    return int(np.count_nonzero(pred & gt)), int(np.count_nonzero(pred | gt))


def per_object_iou(pred_frames: Sequence, gt_frames: Sequence) -> float:
    """Pooled IoU of one object over aligned frames; 1.0 when both are empty."""
    if len(pred_frames) != len(gt_frames):
        raise ValueError(f"{len(pred_frames)} predicted frames vs {len(gt_frames)} annotated")
    inter = union = 0
    for p, g in zip(pred_frames, gt_frames):
        i, u = _overlap(as_mask(p), as_mask(g))
        inter += i
        union += u
    return 1.0 if union == 0 else inter / union


def _mean(values: list[float]) -> float:
    return math.fsum(values) / len(values) if values else 0.0


def compute_report(preds: Iterable[PredictionSet], labels: Iterable[EvalLabels],
                   config: PostprocessConfig = PostprocessConfig()) -> MetricReport:
    """Score post-processed predictions against labels.

    Objects missing from ``preds`` count as all-zero masks with predicted bit 0.
    Objects are visited in (clip_id, object_id) order so the result does not
    depend on input ordering.
    """
    by_clip = {p.clip_id: p for p in preds}
    rows: list[ObjectRow] = []
    for lab in sorted(labels, key=lambda x: x.clip_id):
        pred = by_clip.get(lab.clip_id)
        for oid in sorted(lab.regions):
            if oid not in lab.positive:
                raise ValueError(f"clip {lab.clip_id!r}: object {oid} has no positivity bit")
            frames = sorted(lab.regions[oid])
            gts = [lab.regions[oid][t] for t in frames]
            if pred is None:
                masks = [np.zeros_like(g, dtype=bool) for g in gts]
                bit = 0
            else:
                masks = [binarize(pred.raster(oid, t), config.binarize_at) for t in frames]
                known = oid in pred.scores or oid in pred.rasters
                bit = predicted_positive(pred, oid, config) if known else 0
            inter = union = 0
            for m, g in zip(masks, gts):
                i, u = _overlap(m, g)
                inter += i
                union += u
            obj_iou = 1.0 if union == 0 else inter / union
            positive = int(lab.positive[oid])
            if positive:
                g_contrib = obj_iou
            else:
                g_contrib = 0.0 if any(m.any() for m in masks) else 1.0
            rows.append(ObjectRow(lab.clip_id, oid, positive, obj_iou, g_contrib, bit, inter, union))

    pos = [r for r in rows if r.positive]
    neg = [r for r in rows if not r.positive]

    def ciou(group):
        if not group:
            return 0.0
        u = sum(r.union for r in group)
        return 1.0 if u == 0 else sum(r.intersection for r in group) / u

    tp = sum(1 for r in rows if r.positive and r.predicted)
    tn = sum(1 for r in rows if not r.positive and not r.predicted)
    fp = sum(1 for r in rows if not r.positive and r.predicted)
    fn = sum(1 for r in rows if r.positive and not r.predicted)
    total = tp + tn + fp + fn
    return MetricReport(
        p_miou=_mean([r.iou for r in pos]),
        n_miou=_mean([r.iou for r in neg]),
        p_ciou=ciou(pos),
        n_ciou=ciou(neg),
        giou=_mean([r.giou for r in rows]),
        acc=(tp + tn) / total if total else 0.0,
        tp=tp, tn=tn, fp=fp, fn=fn,
        rows=rows,
        meta={
            "n_objects": len(rows),
            "n_positive": len(pos),
            "n_negative": len(neg),
            "negative_giou_rule": "credit only if empty in every frame",
            "postprocess": config.as_dict(),
        },
    )


def compare_reports(a: MetricReport, b: MetricReport) -> dict[str, float]:
    """``b - a`` for every metric; both reports must cover the same objects."""
    keys_a = sorted((r.clip_id, r.object_id) for r in a.rows)
    keys_b = sorted((r.clip_id, r.object_id) for r in b.rows)
    if keys_a != keys_b:
        raise ValueError("reports cover different object sets")
    return {k: getattr(b, k) - getattr(a, k) for k in METRICS}


def write_csv(path, report: MetricReport) -> None:
    """Summary metrics as ``metric,value`` rows followed by one row per object."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k in METRICS:
            w.writerow([k, repr(getattr(report, k))])
        for k in ("tp", "tn", "fp", "fn"):
            w.writerow([k, getattr(report, k)])
        w.writerow([])
        w.writerow(["clip_id", "object_id", "positive", "iou", "giou", "predicted",
                    "intersection", "union"])
        for r in report.rows:
            w.writerow([r.clip_id, r.object_id, r.positive, repr(r.iou), repr(r.giou),
                        r.predicted, r.intersection, r.union])
