# %% [markdown]
# # Score gating and the positive/negative metrics
#
# A "leaky" predictor segments every object it sees, active or not, but its
# scores match the truth. Gating on the score removes the inactive ones.

# %%
from activeseg.metrics import EvalLabels, compare_reports, compute_report
from activeseg.postprocess import PostprocessConfig, apply_threshold
from activeseg.synth import PREDICTION_MODES, SynthParams, generate, generate_predictions

clips, truth = generate(SynthParams(seed=42))
labels = [EvalLabels.from_clip(c, truth.by_clip()[c.clip_id].cls) for c in clips]
raw_cfg = PostprocessConfig(theta=0.0)

# %%
for mode in PREDICTION_MODES:
    preds = generate_predictions(clips, truth, mode, sigma=0.15)
    raw = compute_report([apply_threshold(p, raw_cfg) for p in preds], labels, raw_cfg)
    gated = compute_report([apply_threshold(p) for p in preds], labels)
    print(f"{mode:8s} raw   ", {k: round(v, 3) for k, v in raw.metrics().items()})
    print(f"{'':8s} gated ", {k: round(v, 3) for k, v in gated.metrics().items()})

# %% [markdown]
# Sweeping the threshold on the noisy predictor.

# %%
preds = generate_predictions(clips, truth, "noisy", sigma=0.15)
base = compute_report([apply_threshold(p, raw_cfg) for p in preds], labels, raw_cfg)
for theta in (0.25, 0.5, 0.75, 0.9):
    cfg = PostprocessConfig(theta=theta)
    rep = compute_report([apply_threshold(p, cfg) for p in preds], labels, cfg)
    d = compare_reports(base, rep)
    print(f"theta {theta:.2f}: acc {rep.acc:.3f}  d_n_miou {d['n_miou']:+.3f}  d_p_miou {d['p_miou']:+.3f}")
