"""Binary-mask and label-map algebra.

Masks are plain 2-D ``numpy`` boolean arrays (row-major, ``H x W``). Label
maps are 2-D ``uint8`` arrays holding object ids with 0 as background.

RLE counts alternate background/foreground runs in row-major order and always
start with a background run, which is 0 when the first pixel is foreground:

    >>> rle_encode(np.array([[0, 0], [1, 1]], dtype=bool)).counts
    (2, 2)
    >>> rle_encode(np.ones((2, 2), dtype=bool)).counts
    (0, 4)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage


class MaskError(ValueError):
    """Raised for malformed masks, RLE counts, or mismatched dimensions."""


@dataclass(frozen=True)
class BBox:
    """Inclusive pixel box ``[row_min, row_max] x [col_min, col_max]``."""

    row_min: int
    col_min: int
    row_max: int
    col_max: int

    def __post_init__(self):
        if self.row_min > self.row_max or self.col_min > self.col_max:
            raise MaskError(f"degenerate box {self}")

    def contains(self, row: int, col: int) -> bool:
        return bbox_contains(self, row, col)

    def raster(self, height: int, width: int) -> np.ndarray:
        """Boolean ``height x width`` mask that is True inside the box."""
        out = np.zeros((height, width), dtype=bool)
        out[self.row_min:self.row_max + 1, self.col_min:self.col_max + 1] = True
        return out


@dataclass(frozen=True)
class RleMask:
    height: int
    width: int
    counts: tuple[int, ...]


def as_mask(mask) -> np.ndarray:
    """Coerce ``mask`` to a 2-D boolean array and check the shape invariants."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise MaskError(f"mask must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise MaskError(f"mask must be at least 1x1, got shape {arr.shape}")
    if arr.dtype != bool:
        arr = arr.astype(bool)
    return arr


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise MaskError(f"dimension mismatch: {a.shape} vs {b.shape}")


def rle_encode(mask) -> RleMask:
    m = as_mask(mask)
    flat = m.ravel()
    # indices where the value changes, plus both ends
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return RleMask(m.shape[0], m.shape[1], tuple(int(r) for r in runs))


def rle_decode(rle: RleMask) -> np.ndarray:
    counts = list(rle.counts)
    if rle.height < 1 or rle.width < 1:
        raise MaskError(f"invalid RLE dimensions {rle.height}x{rle.width}")
    if any(c < 0 for c in counts):
        raise MaskError("negative run length in RLE counts")
    if any(c == 0 for c in counts[1:]):
        raise MaskError("zero-length interior run in RLE counts")
    total = sum(counts)
    if total != rle.height * rle.width:
        raise MaskError(
            f"RLE run sum {total} does not match {rle.height}x{rle.width}"
        )
    values = np.arange(len(counts)) % 2 == 1
    flat = np.repeat(values, counts)
    return flat.reshape(rle.height, rle.width)


def bbox_of(mask) -> BBox | None:
    """Tight bounding box of the foreground, or None for an empty mask."""
    m = as_mask(mask)
    rows = np.flatnonzero(m.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(m.any(axis=0))
    return BBox(int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1]))


def bbox_contains(bbox: BBox, row: int, col: int) -> bool:
    return bbox.row_min <= row <= bbox.row_max and bbox.col_min <= col <= bbox.col_max


def boxes_raster(boxes: Iterable[BBox], height: int, width: int) -> np.ndarray:
    """Union of ``boxes`` rasterized onto a ``height x width`` grid."""
    out = np.zeros((height, width), dtype=bool)
    for b in boxes:
        out[b.row_min:b.row_max + 1, b.col_min:b.col_max + 1] = True
    return out


def intersects_any_bbox(mask, boxes: Sequence[BBox]) -> bool:
    m = as_mask(mask)
    for b in boxes:
        if b.row_max >= m.shape[0] or b.col_max >= m.shape[1] or b.row_min < 0 or b.col_min < 0:
            raise MaskError(f"box {b} exceeds mask of shape {m.shape}")
        if m[b.row_min:b.row_max + 1, b.col_min:b.col_max + 1].any():
            return True
    return False


def coverage_ratio(inner, outer) -> float:
    """Fraction of ``inner``'s foreground that lies inside ``outer`` (0 if empty)."""
    a, b = as_mask(inner), as_mask(outer)
    _check_same_shape(a, b)
    n = int(a.sum())
    if n == 0:
        return 0.0
    return int(np.count_nonzero(a & b)) / n


def iou(a, b) -> float:
    """Intersection over union; two empty masks score 1.0."""
    a, b = as_mask(a), as_mask(b)
    _check_same_shape(a, b)
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a & b)) / union


_STRUCTURES = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


def connected_components(mask, connectivity: int = 4) -> list[np.ndarray]:
    """Split the foreground into connected components.

    Components are returned in order of their first pixel in row-major scan.
    """
    m = as_mask(mask)
    try:
        structure = _STRUCTURES[connectivity]
    except KeyError:
        raise MaskError(f"connectivity must be 4 or 8, got {connectivity}") from None
    labels, n = ndimage.label(m, structure=structure)
    return [labels == k for k in range(1, n + 1)]
