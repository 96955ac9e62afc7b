"""Clip, prediction, pseudo-label and weight-raster records and their on-disk form.

Every artifact is a JSON manifest that points at mask files by paths relative
to the manifest's own directory. Object label maps and binary masks are PGM
files; float rasters are WMAP/PMAP files (see :mod:`activeseg.formats`).

Loading validates every invariant and raises :class:`DatasetError` naming the
offending clip/object/frame. Nothing is silently repaired.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import formats
from .formats import FormatError

MAX_OBJECT_ID = 255


class DatasetError(ValueError):
    """A manifest or one of its referenced files violates the format."""


@dataclass(frozen=True)
class ObjectEntry:
    id: int
    name: str


@dataclass(eq=False)
class FrameRecord:
    t: int
    label_map: np.ndarray
    hand_object: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, FrameRecord):
            return NotImplemented
        return (
            self.t == other.t
            and np.array_equal(self.label_map, other.label_map)
            and np.array_equal(self.hand_object, other.hand_object)
        )


@dataclass(eq=False)
class ActionClip:
    """One action instance: narration, object roster and annotated frames."""

    clip_id: str
    narration: str
    objects: list[ObjectEntry]
    frames: list[FrameRecord]
    height: int
    width: int

    def __eq__(self, other):
        if not isinstance(other, ActionClip):
            return NotImplemented
        return (
            self.clip_id == other.clip_id
            and self.narration == other.narration
            and self.objects == other.objects
            and self.height == other.height
            and self.width == other.width
            and self.frames == other.frames
        )

    @property
    def object_ids(self) -> list[int]:
        return [o.id for o in self.objects]

    def object(self, object_id: int) -> ObjectEntry:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise KeyError(f"clip {self.clip_id!r}: unknown object id {object_id}")

    def frame(self, t: int) -> FrameRecord:
        for f in self.frames:
            if f.t == t:
                return f
        raise KeyError(f"clip {self.clip_id!r}: unknown frame {t}")

    def object_mask(self, object_id: int, t: int) -> np.ndarray:
        """Ground-truth region of ``object_id`` in frame ``t`` (empty if absent)."""
        self.object(object_id)
        return self.frame(t).label_map == object_id

    def validate(self) -> None:
        where = f"clip {self.clip_id!r}"
        if self.height < 1 or self.width < 1:
            raise DatasetError(f"{where}: invalid size {self.height}x{self.width}")
        if not self.frames:
            raise DatasetError(f"{where}: no frames")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise DatasetError(f"{where}: duplicate object ids {ids}")
        for o in self.objects:
            if not isinstance(o.id, int) or not 1 <= o.id <= MAX_OBJECT_ID:
                raise DatasetError(f"{where}: object id {o.id!r} outside 1..{MAX_OBJECT_ID}")
            if not o.name.strip():
                raise DatasetError(f"{where}: object {o.id} has an empty name")
        ts = [f.t for f in self.frames]
        if len(set(ts)) != len(ts):
            raise DatasetError(f"{where}: duplicate frame indices {ts}")
        roster = set(ids)
        for f in self.frames:
            fwhere = f"{where} frame {f.t}"
            if f.label_map.shape != (self.height, self.width):
                raise DatasetError(
                    f"{fwhere}: label map is {f.label_map.shape}, clip is "
                    f"{(self.height, self.width)}"
                )
            if f.hand_object.shape != (self.height, self.width):
                raise DatasetError(
                    f"{fwhere}: hand-object mask is {f.hand_object.shape}, clip is "
                    f"{(self.height, self.width)}"
                )
            present = set(np.unique(f.label_map).tolist()) - {0}
            unknown = sorted(present - roster)
            if unknown:
                raise DatasetError(f"{fwhere}: label map uses ids {unknown} not in roster")


@dataclass(eq=False)
class PredictionSet:
    """Per-object scores and per-object per-frame rasters for one clip.

    Rasters are float32 probabilities in [0, 1] or boolean masks. Objects or
    frames without a raster are all-zero.
    """

    clip_id: str
    height: int
    width: int
    frame_ids: tuple[int, ...]
    scores: dict[int, float | None] = field(default_factory=dict)
    rasters: dict[int, dict[int, np.ndarray]] = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, PredictionSet):
            return NotImplemented
        if (self.clip_id, self.height, self.width, tuple(self.frame_ids)) != (
            other.clip_id, other.height, other.width, tuple(other.frame_ids)
        ):
            return False
        if self.scores != other.scores or self.rasters.keys() != other.rasters.keys():
            return False
        for oid, frames in self.rasters.items():
            theirs = other.rasters[oid]
            if frames.keys() != theirs.keys():
                return False
            for t, arr in frames.items():
                if arr.dtype != theirs[t].dtype or not np.array_equal(arr, theirs[t]):
                    return False
        return True

    @property
    def object_ids(self) -> list[int]:
        return sorted(set(self.scores) | set(self.rasters))

    def score(self, object_id: int) -> float | None:
        return self.scores.get(object_id)

    def raster(self, object_id: int, t: int) -> np.ndarray:
        arr = self.rasters.get(object_id, {}).get(t)
        if arr is None:
            return np.zeros((self.height, self.width), dtype=np.float32)
        return arr

    def probability(self, object_id: int, t: int) -> np.ndarray:
        return np.asarray(self.raster(object_id, t), dtype=np.float64)


@dataclass(eq=False)
class PseudoLabels:
    """Output of the labeling rule for one clip."""

    clip_id: str
    cls: dict[int, int]
    reason: dict[int, str]
    masks: dict[int, dict[int, np.ndarray]]
    config: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, PseudoLabels):
            return NotImplemented
        if (self.clip_id, self.cls, self.reason) != (other.clip_id, other.cls, other.reason):
            return False
        if self.masks.keys() != other.masks.keys():
            return False
        for oid, frames in self.masks.items():
            if frames.keys() != other.masks[oid].keys():
                return False
            if not all(np.array_equal(m, other.masks[oid][t]) for t, m in frames.items()):
                return False
        return True


@dataclass(eq=False)
class WeightRaster:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValueError(f"weight raster must be 2-D, got {self.values.shape}")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, WeightRaster):
            return NotImplemented
        return self.values.tobytes() == other.values.tobytes() and self.values.shape == other.values.shape


@dataclass(frozen=True)
class VocabStats:
    train_actions: int
    train_verbs: int
    train_nouns: int
    val_actions: int
    val_verbs: int
    val_nouns: int
    unseen_actions: int
    unseen_verbs: int
    unseen_nouns: int


# --------------------------------------------------------------------------
# helpers

def _safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", text) or "_"


def _resolve(base: str, rel: str) -> str:
    return rel if os.path.isabs(rel) else os.path.join(base, rel)


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DatasetError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: invalid JSON ({exc})") from None


def dump_json(path, doc) -> None:
    """Write ``doc`` as deterministic, human-diffable JSON."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _field(doc: dict, key: str, where: str):
    try:
        return doc[key]
    except (KeyError, TypeError):
        raise DatasetError(f"{where}: missing field {key!r}") from None


def _read_pgm(path: str, where: str) -> np.ndarray:
    try:
        return formats.read_pgm(path)
    except FileNotFoundError:
        raise DatasetError(f"{where}: missing file {path}") from None
    except FormatError as exc:
        raise DatasetError(f"{where}: {exc}") from None


def _read_binary_pgm(path: str, where: str) -> np.ndarray:
    arr = _read_pgm(path, where)
    bad = np.setdiff1d(np.unique(arr), [0, 255])
    if bad.size:
        raise DatasetError(f"{where}: binary mask {path} holds values {bad.tolist()[:5]} (expected 0/255)")
    return arr == 255


# --------------------------------------------------------------------------
# clip manifests

def load_manifest(path) -> list[ActionClip]:
    doc = _read_json(path)
    base = os.path.dirname(os.path.abspath(path))
    clips = []
    for i, c in enumerate(_field(doc, "clips", str(path))):
        clip_id = str(_field(c, "clip_id", f"{path}: clip #{i}"))
        where = f"clip {clip_id!r}"
        height = int(_field(c, "height", where))
        width = int(_field(c, "width", where))
        objects = []
        for o in _field(c, "objects", where):
            oid = _field(o, "id", f"{where} object")
            if not isinstance(oid, int) or isinstance(oid, bool):
                raise DatasetError(f"{where}: object id {oid!r} is not an integer")
            if not 1 <= oid <= MAX_OBJECT_ID:
                raise DatasetError(f"{where}: object id {oid} outside 1..{MAX_OBJECT_ID}")
            objects.append(ObjectEntry(oid, str(_field(o, "name", f"{where} object {oid}"))))
        frames = []
        for fr in _field(c, "frames", where):
            t = int(_field(fr, "t", f"{where} frame"))
            fwhere = f"{where} frame {t}"
            label_map = _read_pgm(_resolve(base, _field(fr, "label_map", fwhere)), fwhere)
            hand_path = fr.get("hand_object")
            if hand_path is None:
                hand = np.zeros(label_map.shape, dtype=bool)
            else:
                hand = _read_binary_pgm(_resolve(base, hand_path), fwhere)
            frames.append(FrameRecord(t, label_map, hand))
        clip = ActionClip(clip_id, str(_field(c, "narration", where)), objects, frames, height, width)
        clip.validate()
        clips.append(clip)
    ids = [c.clip_id for c in clips]
    if len(set(ids)) != len(ids):
        raise DatasetError(f"{path}: duplicate clip ids")
    return clips


def write_manifest(path, clips: Iterable[ActionClip], extra: dict | None = None) -> None:
    """Write ``clips`` and their masks; mask files go under ``masks/`` next to ``path``."""
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    for clip in clips:
        clip.validate()
        cdir = os.path.join("masks", _safe_name(clip.clip_id))
        frames = []
        for f in clip.frames:
            lm = os.path.join(cdir, f"t{f.t:04d}_labels.pgm")
            ho = os.path.join(cdir, f"t{f.t:04d}_hands.pgm")
            formats.write_pgm(os.path.join(base, lm), f.label_map.astype(np.uint8))
            formats.write_pgm(os.path.join(base, ho), f.hand_object.astype(bool))
            frames.append({"t": f.t, "label_map": lm, "hand_object": ho})
        entries.append({
            "clip_id": clip.clip_id,
            "narration": clip.narration,
            "height": clip.height,
            "width": clip.width,
            "objects": [{"id": o.id, "name": o.name} for o in clip.objects],
            "frames": frames,
        })
    doc = dict(extra or {})
    doc["clips"] = entries
    dump_json(path, doc)


# --------------------------------------------------------------------------
# predictions

def _read_prediction_raster(path: str, where: str) -> np.ndarray:
    try:
        kind = formats.sniff(path)
    except FileNotFoundError:
        raise DatasetError(f"{where}: missing file {path}") from None
    except FormatError as exc:
        raise DatasetError(f"{where}: {exc}") from None
    if kind == "pgm":
        arr = _read_pgm(path, where)
        if np.isin(arr, (0, 255)).all():
            return arr == 255
        return arr.astype(np.float32) / np.float32(255)
    try:
        _, values = formats.read_raster(path, formats.PROB_MAGIC)
    except FormatError as exc:
        raise DatasetError(f"{where}: {exc}") from None
    if not np.isfinite(values).all() or values.min() < 0 or values.max() > 1:
        raise DatasetError(f"{where}: probability outside [0, 1] in {path}")
    return values


def load_predictions(path, clips: Iterable[ActionClip] | None = None) -> list[PredictionSet]:
    """Load a prediction manifest, validated against ``clips`` when given.

    Without ``clips`` the manifest itself must carry ``height``, ``width`` and
    ``frame_ids`` per clip (as written by :func:`write_predictions`).
    """
    doc = _read_json(path)
    base = os.path.dirname(os.path.abspath(path))
    known = {c.clip_id: c for c in clips} if clips is not None else None
    out = []
    for i, entry in enumerate(_field(doc, "predictions", str(path))):
        clip_id = str(_field(entry, "clip_id", f"{path}: prediction #{i}"))
        where = f"predictions for clip {clip_id!r}"
        if known is not None:
            if clip_id not in known:
                raise DatasetError(f"{where}: unknown clip id")
            clip = known[clip_id]
            height, width = clip.height, clip.width
            frame_ids = tuple(f.t for f in clip.frames)
            roster = set(clip.object_ids)
        else:
            height = int(_field(entry, "height", where))
            width = int(_field(entry, "width", where))
            frame_ids = tuple(int(t) for t in _field(entry, "frame_ids", where))
            roster = None
        pset = PredictionSet(clip_id, height, width, frame_ids)
        for o in entry.get("objects", []):
            oid = _field(o, "id", f"{where} object")
            owhere = f"{where} object {oid}"
            if roster is not None and oid not in roster:
                raise DatasetError(f"{owhere}: id not in clip roster")
            if oid in pset.scores:
                raise DatasetError(f"{owhere}: listed twice")
            score = o.get("cls_score")
            if score is not None:
                score = float(score)
                if not 0.0 <= score <= 1.0 or math.isnan(score):
                    raise DatasetError(f"{owhere}: cls_score {score} outside [0, 1]")
            pset.scores[oid] = score
            frames = {}
            for fr in o.get("frames", []):
                t = int(_field(fr, "t", owhere))
                fwhere = f"{owhere} frame {t}"
                if t not in frame_ids:
                    raise DatasetError(f"{fwhere}: frame not in clip")
                if t in frames:
                    raise DatasetError(f"{fwhere}: listed twice")
                arr = _read_prediction_raster(_resolve(base, _field(fr, "raster", fwhere)), fwhere)
                if arr.shape != (height, width):
                    raise DatasetError(f"{fwhere}: raster is {arr.shape}, clip is {(height, width)}")
                frames[t] = arr
            pset.rasters[oid] = frames
        out.append(pset)
    return out


def write_predictions(path, preds: Iterable[PredictionSet], extra: dict | None = None) -> None:
    """Boolean rasters are stored as 0/255 PGM, float rasters as PMAP."""
    base = os.path.dirname(os.path.abspath(path))
    stem = os.path.splitext(os.path.basename(path))[0]
    entries = []
    for p in preds:
        cdir = os.path.join(f"{stem}_rasters", _safe_name(p.clip_id))
        objects = []
        for oid in p.object_ids:
            frames = []
            for t, arr in sorted(p.rasters.get(oid, {}).items()):
                if arr.dtype == bool:
                    rel = os.path.join(cdir, f"obj{oid:03d}_t{t:04d}.pgm")
                    formats.write_pgm(os.path.join(base, rel), arr)
                else:
                    rel = os.path.join(cdir, f"obj{oid:03d}_t{t:04d}.pmap")
                    formats.write_raster(os.path.join(base, rel), arr, formats.PROB_MAGIC)
                frames.append({"t": t, "raster": rel})
            objects.append({"id": oid, "cls_score": p.scores.get(oid), "frames": frames})
        entries.append({
            "clip_id": p.clip_id,
            "height": p.height,
            "width": p.width,
            "frame_ids": list(p.frame_ids),
            "objects": objects,
        })
    doc = dict(extra or {})
    doc["predictions"] = entries
    dump_json(path, doc)


# --------------------------------------------------------------------------
# pseudo-labels

def write_pseudo_labels(path, labels: Iterable[PseudoLabels], clips: Iterable[ActionClip],
                        extra: dict | None = None) -> None:
    base = os.path.dirname(os.path.abspath(path))
    names = {c.clip_id: {o.id: o.name for o in c.objects} for c in clips}
    entries = []
    config = None
    for pl in labels:
        cdir = os.path.join("pseudo_masks", _safe_name(pl.clip_id))
        objects = []
        for oid in sorted(pl.cls):
            frames = []
            for t, m in sorted(pl.masks[oid].items()):
                rel = os.path.join(cdir, f"obj{oid:03d}_t{t:04d}.pgm")
                formats.write_pgm(os.path.join(base, rel), m.astype(bool))
                frames.append({"t": t, "mask": rel})
            objects.append({
                "id": oid,
                "name": names.get(pl.clip_id, {}).get(oid),
                "cls": int(pl.cls[oid]),
                "reason": pl.reason[oid],
                "frames": frames,
            })
        entries.append({"clip_id": pl.clip_id, "objects": objects})
        config = pl.config if config is None else config
    doc = dict(extra or {})
    doc["labeling_config"] = config or {}
    doc["clips"] = entries
    dump_json(path, doc)


def load_pseudo_labels(path) -> list[PseudoLabels]:
    doc = _read_json(path)
    base = os.path.dirname(os.path.abspath(path))
    config = doc.get("labeling_config", {})
    out = []
    for entry in _field(doc, "clips", str(path)):
        clip_id = str(_field(entry, "clip_id", str(path)))
        where = f"pseudo-labels for clip {clip_id!r}"
        cls, reason, masks = {}, {}, {}
        for o in _field(entry, "objects", where):
            oid = _field(o, "id", where)
            owhere = f"{where} object {oid}"
            bit = _field(o, "cls", owhere)
            if bit not in (0, 1):
                raise DatasetError(f"{owhere}: cls must be 0 or 1, got {bit!r}")
            cls[oid] = int(bit)
            reason[oid] = str(_field(o, "reason", owhere))
            masks[oid] = {}
            for fr in o.get("frames", []):
                t = int(_field(fr, "t", owhere))
                masks[oid][t] = _read_binary_pgm(_resolve(base, _field(fr, "mask", owhere)),
                                                 f"{owhere} frame {t}")
            if bit == 0 and any(m.any() for m in masks[oid].values()):
                raise DatasetError(f"{owhere}: negative object with a nonempty mask")
        out.append(PseudoLabels(clip_id, cls, reason, masks, dict(config)))
    return out


def load_positivity(path) -> dict[str, dict[int, int]]:
    """Per-clip ground-truth positivity bits from a labels JSON.

    Accepts pseudo-label files (``cls``) and hand-annotated files (``positive``).
    Mask paths, if any, are not read.
    """
    doc = _read_json(path)
    out = {}
    for entry in _field(doc, "clips", str(path)):
        clip_id = str(_field(entry, "clip_id", str(path)))
        bits = {}
        for o in _field(entry, "objects", f"labels for clip {clip_id!r}"):
            oid = _field(o, "id", f"labels for clip {clip_id!r}")
            owhere = f"labels for clip {clip_id!r} object {oid}"
            if "cls" in o:
                bit = o["cls"]
            elif "positive" in o:
                bit = o["positive"]
            else:
                raise DatasetError(f"{owhere}: no positivity bit")
            if bit not in (0, 1, True, False):
                raise DatasetError(f"{owhere}: positivity must be 0/1, got {bit!r}")
            bits[oid] = int(bit)
        out[clip_id] = bits
    return out


# --------------------------------------------------------------------------
# weight rasters

def write_weight_raster(path, weights: WeightRaster) -> None:
    formats.write_raster(path, weights.values, formats.WEIGHT_MAGIC)


def read_weight_raster(path) -> WeightRaster:
    _, values = formats.read_raster(path, formats.WEIGHT_MAGIC)
    return WeightRaster(values)


def load_weight_index(path) -> dict[tuple[str, int, int], WeightRaster]:
    """Read the JSON index written by the ``weights`` command."""
    doc = _read_json(path)
    base = os.path.dirname(os.path.abspath(path))
    out = {}
    for entry in _field(doc, "clips", str(path)):
        clip_id = str(_field(entry, "clip_id", str(path)))
        for o in _field(entry, "objects", clip_id):
            oid = _field(o, "id", clip_id)
            for fr in _field(o, "frames", f"{clip_id} object {oid}"):
                t = int(_field(fr, "t", f"{clip_id} object {oid}"))
                where = f"weights for clip {clip_id!r} object {oid} frame {t}"
                p = _resolve(base, _field(fr, "weights", where))
                try:
                    out[(clip_id, oid, t)] = read_weight_raster(p)
                except FileNotFoundError:
                    raise DatasetError(f"{where}: missing file {p}") from None
                except FormatError as exc:
                    raise DatasetError(f"{where}: {exc}") from None
    return out


# --------------------------------------------------------------------------
# vocabulary

def _tokens(text: str) -> list[str]:
    return text.lower().split()


def _split_vocab(clips: Iterable[ActionClip]) -> tuple[set, set, set]:
    actions, verbs, nouns = set(), set(), set()
    for c in clips:
        toks = _tokens(c.narration)
        if toks:
            actions.add(" ".join(toks))
            verbs.add(toks[0])
            nouns.update(toks[1:])
        nouns.update(" ".join(_tokens(o.name)) for o in c.objects)
    return actions, verbs, nouns


def vocab_stats(train: Iterable[ActionClip], val: Iterable[ActionClip]) -> VocabStats:
    """Count unique actions, verbs and nouns per split and the unseen ones.

    An action is a whitespace-normalized lowercase narration; its verb is the
    first token; nouns are the object names plus the narration's other tokens.
    """
    ta, tv, tn = _split_vocab(train)
    va, vv, vn = _split_vocab(val)
    return VocabStats(
        train_actions=len(ta), train_verbs=len(tv), train_nouns=len(tn),
        val_actions=len(va), val_verbs=len(vv), val_nouns=len(vn),
        unseen_actions=len(va - ta), unseen_verbs=len(vv - tv), unseen_nouns=len(vn - tn),
    )
