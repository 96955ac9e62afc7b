"""Active-object segmentation tooling: pseudo-labels, loss weights, focal loss,
score gating and positive/negative segmentation metrics."""

__version__ = "0.1.0"
