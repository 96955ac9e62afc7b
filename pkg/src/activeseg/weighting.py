"""Pixel-wise action-guided loss weights.

Inside an object's region each pixel gets one of five weights, chosen by the
first matching case:

====  ==========================================  ==================
case  condition                                   weight
====  ==========================================  ==================
1     named object, pixel inside a hand bbox      ``lambda_pos``
2     named object, pixel outside every bbox      ``lambda_nar``
3     unnamed object, pixel on the hand mask      ``lambda_hobj``
4     unnamed object, pixel outside every bbox    ``lambda_neg``
5     otherwise (unnamed, in a bbox, off hands)   1
====  ==========================================  ==================

Pixels outside the object's region weigh 1 (case 0 in :func:`weight_cases`).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import ActionClip, WeightRaster
from .labeling import LabelingConfig, hand_object_bboxes, narration_mentions
from .masks import boxes_raster

OUTSIDE, POS, NAR, HOBJ, NEG, OTHER = range(6)
CASE_NAMES = {
    OUTSIDE: "outside",
    POS: "lambda_pos",
    NAR: "lambda_nar",
    HOBJ: "lambda_hobj",
    NEG: "lambda_neg",
    OTHER: "one",
}


@dataclass(frozen=True)
class WeightConfig:
    """Weights for the four non-trivial cases.

    ``strict=False`` skips the ordering checks so degenerate settings such as
    all-ones can be expressed.
    """

    lambda_pos: float = 5.0
    lambda_nar: float = 2.0
    lambda_hobj: float = 2.0
    lambda_neg: float = 5.0
    strict: bool = True

    def __post_init__(self):
        lams = (self.lambda_pos, self.lambda_nar, self.lambda_hobj, self.lambda_neg)
        if any(not lam > 0 for lam in lams):
            raise ValueError(f"weights must be positive, got {lams}")
        if not self.strict:
            return
        if any(not lam > 1 for lam in lams):
            raise ValueError(f"every lambda must exceed 1, got {lams}")
        if not (self.lambda_pos > self.lambda_nar and self.lambda_pos > self.lambda_hobj):
            raise ValueError("lambda_pos must exceed both lambda_nar and lambda_hobj")

    def as_dict(self) -> dict:
        return asdict(self)

    def case_values(self) -> np.ndarray:
        """Lookup table from case index to float32 weight."""
        return np.array(
            [1.0, self.lambda_pos, self.lambda_nar, self.lambda_hobj, self.lambda_neg, 1.0],
            dtype=np.float32,
        )


def weight_cases(clip: ActionClip, object_id: int, t: int,
                 labeling_config: LabelingConfig = LabelingConfig()) -> np.ndarray:
    """Per-pixel case index (see module table) as a ``uint8`` raster."""
    obj = clip.object(object_id)
    frame = clip.frame(t)
    region = frame.label_map == object_id
    hands = frame.hand_object
    in_box = boxes_raster(hand_object_bboxes(hands, labeling_config.bbox_mode), clip.height, clip.width)

    cases = np.full(region.shape, OUTSIDE, dtype=np.uint8)
    if narration_mentions(obj.name, clip.narration, labeling_config.match_mode):
        cases[region & in_box] = POS
        cases[region & ~in_box] = NAR
    else:
        cases[region] = OTHER
        cases[region & ~in_box] = NEG
        # hand pixels lie inside their own component's box, so this never
        # overwrites a NEG pixel
        cases[region & hands] = HOBJ
    return cases


def weight_map(clip: ActionClip, object_id: int, t: int,
               labeling_config: LabelingConfig = LabelingConfig(),
               weight_config: WeightConfig = WeightConfig()) -> WeightRaster:
    cases = weight_cases(clip, object_id, t, labeling_config)
    return WeightRaster(weight_config.case_values()[cases])


def weight_histogram(raster: WeightRaster) -> dict[float, int]:
    """Exact pixel count per distinct weight value."""
    values, counts = np.unique(raster.values, return_counts=True)
    return {float(v): int(c) for v, c in zip(values, counts)}


def case_histogram(cases: np.ndarray) -> Counter:
    return Counter({CASE_NAMES[int(k)]: int(v) for k, v in zip(*np.unique(cases, return_counts=True))})
