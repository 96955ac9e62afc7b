import numpy as np
import pytest

from activeseg.dataset import ActionClip, FrameRecord, ObjectEntry
from activeseg.synth import SynthParams, generate


def make_clip(label_maps, hands, objects, narration="take knife", clip_id="c0"):
    """Build a validated clip from lists of 2-D arrays and (id, name) pairs."""
    frames = [
        FrameRecord(t, np.asarray(lm, dtype=np.uint8), np.asarray(hm, dtype=bool))
        for t, (lm, hm) in enumerate(zip(label_maps, hands))
    ]
    h, w = frames[0].label_map.shape
    clip = ActionClip(clip_id, narration, [ObjectEntry(i, n) for i, n in objects], frames, h, w)
    clip.validate()
    return clip


@pytest.fixture(scope="session")
def default_suite():
    return generate(SynthParams())
