# %% [markdown]
# # Pseudo-labels from narrations and hand masks
#
# Build a small synthetic suite, label every object and compare with the
# truth the generator recorded while placing things.

# %%
from collections import Counter

import numpy as np

from activeseg.labeling import LabelingConfig, build_pseudo_labels
from activeseg.synth import SynthParams, generate

clips, truth = generate(SynthParams(seed=42, clips=8))
clip = clips[0]
print(clip.clip_id, repr(clip.narration), [(o.id, o.name) for o in clip.objects])

# %%
pl = build_pseudo_labels(clip)
for oid in clip.object_ids:
    area = sum(int(m.sum()) for m in pl.masks[oid].values())
    print(f"object {oid}: cls={pl.cls[oid]} reason={pl.reason[oid]:15s} mask pixels={area}")

# %% [markdown]
# Agreement with the generator's truth, and the spread of reasons.

# %%
by = truth.by_clip()
reasons = Counter()
agree = 0
for c in clips:
    labels = build_pseudo_labels(c)
    agree += labels.reason == by[c.clip_id].reason
    reasons.update(labels.reason.values())
print(f"{agree}/{len(clips)} clips agree;", dict(reasons))

# %% [markdown]
# A stricter rule: every frame must qualify, and one box spans all hand pixels.

# %%
strict = LabelingConfig(frame_agg="all", bbox_mode="global")
flips = [
    (c.clip_id, oid)
    for c in clips
    for oid, bit in build_pseudo_labels(c, strict).cls.items()
    if bit != by[c.clip_id].cls[oid]
]
print("objects whose bit changes:", flips)

# %%
# the hand-object mask of frame 0 as ASCII, downsampled 4x
hands = clip.frames[0].hand_object[::4, ::4]
labels = clip.frames[0].label_map[::4, ::4]
rows = np.where(hands, "#", np.where(labels > 0, labels.astype(str), "."))
print("\n".join("".join(r) for r in rows))
