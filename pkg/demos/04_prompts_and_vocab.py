# %% [markdown]
# # Prompts and split vocabulary

# %%
from activeseg.dataset import vocab_stats
from activeseg.prompts import STYLES, build_prompt
from activeseg.synth import SynthParams, generate

for style in STYLES:
    print(f"{style:16s} {build_prompt('knife', 'cut apple', style)!r}")

# %%
clips, _ = generate(SynthParams(seed=42, clips=2))
for clip in clips:
    for obj in clip.objects:
        print(clip.clip_id, build_prompt(obj.name, clip.narration))

# %% [markdown]
# Two synthetic splits drawn with different seeds share some verbs and nouns.

# %%
train, _ = generate(SynthParams(seed=1, clips=20))
val, _ = generate(SynthParams(seed=2, clips=10))
print(vocab_stats(train, val))
