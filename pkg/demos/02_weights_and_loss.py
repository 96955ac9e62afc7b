# %% [markdown]
# # Pixel weights and the weighted focal loss

# %%
import math
from collections import Counter

import numpy as np

from activeseg.loss import action_guided_focal_loss, focal_loss, loss_gradient
from activeseg.synth import SynthParams, generate
from activeseg.weighting import WeightConfig, case_histogram, weight_cases, weight_map

clips, _ = generate(SynthParams(seed=42))

# %% [markdown]
# Pixels of every object in every frame, tallied by which weight rule fired.

# %%
tally = Counter()
for clip in clips:
    for obj in clip.objects:
        for f in clip.frames:
            tally.update(case_histogram(weight_cases(clip, obj.id, f.t)))
print(dict(tally))

# %%
clip = clips[0]
w = weight_map(clip, 1, 0, weight_config=WeightConfig(lambda_pos=8, lambda_nar=3, lambda_hobj=3, lambda_neg=8))
print(np.unique(w.values, return_counts=True))

# %% [markdown]
# Single-pixel values against hand arithmetic.

# %%
print(focal_loss([[0.5]], [[1]]).value, 0.25 * 0.25 * math.log(2))
print(focal_loss([[0.5]], [[0]]).value, 0.75 * 0.25 * math.log(2))
print(action_guided_focal_loss([[0.5]], [[1]], [[5.0]]).value)

# %% [markdown]
# The loss over one object's frames, for a prediction that drifts from the
# target towards a blank mask.

# %%
obj_mask = clip.frames[0].label_map == 1
weights = weight_map(clip, 1, 0)
for mix in (0.0, 0.25, 0.5, 0.75, 1.0):
    p = np.clip((1 - mix) * obj_mask + 0.02, 0, 1)
    print(f"drift {mix:.2f}: plain {focal_loss(p, obj_mask).value:.6f}  "
          f"weighted {action_guided_focal_loss(p, obj_mask, weights).value:.6f}")

# %%
# analytic gradient against a central difference at one pixel
rng = np.random.default_rng(0)
p = rng.uniform(0.05, 0.95, (4, 4))
y = rng.random((4, 4)) < 0.5
g = loss_gradient(p, y, None)
h = 1e-5
up, dn = p.copy(), p.copy()
up[1, 2] += h
dn[1, 2] -= h
print(g[1, 2], (focal_loss(up, y).value - focal_loss(dn, y).value) / (2 * h))
