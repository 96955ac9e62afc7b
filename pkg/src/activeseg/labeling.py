"""Rule-based active-object pseudo-labels.

An object is labeled positive (``cls = 1``) when, in priority order:

1. its name is mentioned in the narration (``"narration"``),
2. at least ``contact_threshold`` of its pixels lie inside the hand-object
   mask in a qualifying frame (``"hand-contact"``),
3. it overlaps a hand-object bounding box in a qualifying frame
   (``"bbox-intersect"``).

Otherwise it is negative. Positive objects keep their ground-truth masks as
action-aware masks; negative objects get all-zero masks.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dataset import ActionClip, PseudoLabels
from .masks import BBox, bbox_of, connected_components, coverage_ratio, intersects_any_bbox

NARRATION = "narration"
HAND_CONTACT = "hand-contact"
BBOX_INTERSECT = "bbox-intersect"
NEGATIVE = "negative"

BBOX_MODES = ("per-component", "global")
FRAME_AGGS = ("any", "all")
MATCH_MODES = ("all-tokens", "substring")


@dataclass(frozen=True)
class LabelingConfig:
    contact_threshold: float = 0.5
    bbox_mode: str = "per-component"
    frame_agg: str = "any"
    match_mode: str = "all-tokens"

    def __post_init__(self):
        if not 0.0 < self.contact_threshold <= 1.0:
            raise ValueError(f"contact_threshold must be in (0, 1], got {self.contact_threshold}")
        if self.bbox_mode not in BBOX_MODES:
            raise ValueError(f"bbox_mode must be one of {BBOX_MODES}, got {self.bbox_mode!r}")
        if self.frame_agg not in FRAME_AGGS:
            raise ValueError(f"frame_agg must be one of {FRAME_AGGS}, got {self.frame_agg!r}")
        if self.match_mode not in MATCH_MODES:
            raise ValueError(f"match_mode must be one of {MATCH_MODES}, got {self.match_mode!r}")

    def as_dict(self) -> dict:
        return asdict(self)


def narration_mentions(object_name: str, narration: str, match_mode: str = "all-tokens") -> bool:
    """Whether the narration names the object.

    ``all-tokens`` requires every word of the name to appear as a word of the
    narration, in any order. ``substring`` is plain containment. Both are
    case-insensitive; no lemmatization is applied.
    """
    name = object_name.lower()
    text = narration.lower()
    if match_mode == "substring":
        return " ".join(name.split()) in " ".join(text.split())
    if match_mode != "all-tokens":
        raise ValueError(f"unknown match_mode {match_mode!r}")
    name_tokens = name.split()
    if not name_tokens:
        return False
    return set(name_tokens) <= set(text.split())


def hand_object_bboxes(hand_object: np.ndarray, bbox_mode: str = "per-component") -> list[BBox]:
    if bbox_mode == "global":
        box = bbox_of(hand_object)
        return [] if box is None else [box]
    if bbox_mode != "per-component":
        raise ValueError(f"unknown bbox_mode {bbox_mode!r}")
    return [bbox_of(c) for c in connected_components(hand_object)]


def _qualifies(hits: list[bool], frame_agg: str) -> bool:
    if not hits:
        return False
    return all(hits) if frame_agg == "all" else any(hits)


def classify_object(clip: ActionClip, object_id: int,
                    config: LabelingConfig = LabelingConfig()) -> tuple[int, str]:
    obj = clip.object(object_id)
    if narration_mentions(obj.name, clip.narration, config.match_mode):
        return 1, NARRATION

    contact, boxed = [], []
    for frame in clip.frames:
        region = frame.label_map == object_id
        # objects missing from a frame give no evidence either way
        if not region.any():
            continue
        contact.append(coverage_ratio(region, frame.hand_object) >= config.contact_threshold)
        boxes = hand_object_bboxes(frame.hand_object, config.bbox_mode)
        boxed.append(intersects_any_bbox(region, boxes))

    if _qualifies(contact, config.frame_agg):
        return 1, HAND_CONTACT
    if _qualifies(boxed, config.frame_agg):
        return 1, BBOX_INTERSECT
    return 0, NEGATIVE


def build_pseudo_labels(clip: ActionClip, config: LabelingConfig = LabelingConfig()) -> PseudoLabels:
    cls, reason, masks = {}, {}, {}
    for obj in clip.objects:
        bit, why = classify_object(clip, obj.id, config)
        cls[obj.id] = bit
        reason[obj.id] = why
        masks[obj.id] = {
            f.t: (f.label_map == obj.id) if bit else np.zeros(f.label_map.shape, dtype=bool)
            for f in clip.frames
        }
    return PseudoLabels(clip.clip_id, cls, reason, masks, config.as_dict())
