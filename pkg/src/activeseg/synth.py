"""Deterministic synthetic clips with known involvement ground truth.

Each clip is assembled from *units* placed on a blank canvas with a margin
between their footprints, so hand-object boxes never reach a unit they were
not built for:

``hand-contact``
    an object plus a hand rectangle overlapping it; the hand-object component
    is their union, so the object is fully covered.
``bbox-intersect``
    an L-shaped hand component whose bounding box reaches over an object
    that no hand pixel touches.
``narration``
    the object named in the narration, placed alone (``far``), partly under
    a hand rectangle (``straddle``) or held (``held``).
``negative``
    an object away from every hand and absent from the narration.
``free hand``
    a hand rectangle with nothing under it.

Every unit is active in a key frame where its object is present; objects and
hand components also show up in a random subset of the other frames.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import ActionClip, FrameRecord, ObjectEntry, PredictionSet
from .labeling import BBOX_INTERSECT, HAND_CONTACT, NARRATION, NEGATIVE, narration_mentions
from .rng import CounterRNG

ROLES = (NARRATION, HAND_CONTACT, BBOX_INTERSECT, NEGATIVE)
PREDICTION_MODES = ("perfect", "empty", "leaky", "noisy")

VERBS = (
    "take", "put", "open", "close", "cut", "wash", "pick-up", "put-down",
    "pour-into", "stir", "move", "hold", "dry", "rinse",
)
NOUNS = (
    "knife", "apple", "pan", "plate", "spoon", "cup", "bowl", "onion",
    "tofu container", "container", "cutting board", "board", "olive oil",
    "tea towel", "fridge", "tap", "sponge", "lid", "carrot bag", "bag", "meat",
    "dough", "paper", "salt", "bottle", "glass", "fork", "pot", "eggplant",
    "grape", "spinach", "oven tray",
)


class SynthError(RuntimeError):
    """Placement could not be completed within the retry budget."""


@dataclass(frozen=True)
class SynthParams:
    seed: int = 42
    clips: int = 8
    frames_per_clip: int = 3
    height: int = 64
    width: int = 64
    objects_per_clip: tuple[int, int] = (3, 6)
    shapes: tuple[str, ...] = ("rectangle", "disk")
    verbs: tuple[str, ...] = VERBS
    nouns: tuple[str, ...] = NOUNS
    forced_roles: tuple[str, ...] | None = None
    max_retries: int = 200

    def __post_init__(self):
        if self.clips < 1 or self.frames_per_clip < 1:
            raise ValueError("clips and frames_per_clip must be >= 1")
        if self.height < 16 or self.width < 16:
            raise ValueError("canvas must be at least 16x16")
        lo, hi = self.objects_per_clip
        if not 1 <= lo <= hi <= 255:
            raise ValueError(f"objects_per_clip must satisfy 1 <= lo <= hi <= 255, got {(lo, hi)}")
        if self.forced_roles is not None:
            if not 1 <= len(self.forced_roles) <= 255:
                raise ValueError("forced_roles must list 1..255 roles")
            bad = set(self.forced_roles) - set(ROLES)
            if bad:
                raise ValueError(f"unknown roles {sorted(bad)}")
            if list(self.forced_roles).count(NARRATION) > 1:
                raise ValueError("at most one narrated object per clip")
        if not set(self.shapes) <= {"rectangle", "disk"} or not self.shapes:
            raise ValueError(f"shapes must be a nonempty subset of rectangle/disk, got {self.shapes}")
        if not self.verbs or not self.nouns:
            raise ValueError("verb and noun lists must be nonempty")

    def as_dict(self) -> dict:
        d = asdict(self)
        for k in ("objects_per_clip", "shapes", "verbs", "nouns", "forced_roles"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d


@dataclass
class ClipTruth:
    clip_id: str
    cls: dict[int, int]
    reason: dict[int, str]
    placements: dict[int, dict] = field(default_factory=dict)
    hand_units: list[dict] = field(default_factory=list)
    injected_names: list[str] = field(default_factory=list)
    empty_hand_frames: list[int] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "objects": [
                {"id": oid, "cls": self.cls[oid], "reason": self.reason[oid], **self.placements[oid]}
                for oid in sorted(self.cls)
            ],
            "hand_units": self.hand_units,
            "injected_names": self.injected_names,
            "empty_hand_frames": self.empty_hand_frames,
        }


@dataclass
class SynthTruth:
    clips: list[ClipTruth]

    def by_clip(self) -> dict[str, ClipTruth]:
        return {c.clip_id: c for c in self.clips}

    def as_dict(self) -> dict:
        return {"clips": [c.as_dict() for c in self.clips]}


# --------------------------------------------------------------------------
# geometry

def _rect(h, w, r, c, hh, ww):
    m = np.zeros((h, w), dtype=bool)
    m[max(r, 0):max(r + hh, 0), max(c, 0):max(c + ww, 0)] = True
    return m


def _disk(h, w, cr, cc, rad):
    yy, xx = np.ogrid[:h, :w]
    return (yy - cr) ** 2 + (xx - cc) ** 2 <= rad * rad


class _Canvas:
    def __init__(self, height, width, margin=2):
        self.h, self.w, self.margin = height, width, margin
        self.taken = np.zeros((height, width), dtype=bool)

    def fits(self, box):
        r0, c0, r1, c1 = box
        if r0 < 0 or c0 < 0 or r1 >= self.h or c1 >= self.w:
            return False
        m = self.margin
        return not self.taken[max(r0 - m, 0):r1 + m + 1, max(c0 - m, 0):c1 + m + 1].any()

    def take(self, box):
        r0, c0, r1, c1 = box
        self.taken[r0:r1 + 1, c0:c1 + 1] = True


def _footprint(*masks):
    m = np.logical_or.reduce(masks)
    rows = np.flatnonzero(m.any(axis=1))
    cols = np.flatnonzero(m.any(axis=0))
    return int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1])


class _Builder:
    """Places one clip's units; any failed placement raises ``_Retry``."""

    def __init__(self, params: SynthParams, rng: CounterRNG):
        self.p = params
        self.rng = rng
        self.h, self.w = params.height, params.width
        self.canvas = _Canvas(self.h, self.w)
        s = min(self.h, self.w)
        self.obj_max = max(4, s // 8)
        self.hand = max(3, s // 16 + 2)
        self.arm = max(8, s // 5)

    def shape(self, r, c):
        """Random object shape with top-left corner at (r, c)."""
        kind = self.rng.choice(self.p.shapes)
        if kind == "disk":
            rad = self.rng.integers(2, max(3, self.obj_max // 2 + 2))
            return kind, _disk(self.h, self.w, r + rad, c + rad, rad), {"radius": rad}
        hh = self.rng.integers(3, self.obj_max + 1)
        ww = self.rng.integers(3, self.obj_max + 1)
        return kind, _rect(self.h, self.w, r, c, hh, ww), {"size": [hh, ww]}

    def spot(self, extent):
        return self.rng.integers(0, max(1, self.h - extent)), self.rng.integers(0, max(1, self.w - extent))

    def place(self, *masks):
        if any(not m.any() for m in masks):
            raise _Retry
        box = _footprint(*masks)
        if not self.canvas.fits(box):
            raise _Retry
        self.canvas.take(box)
        return box

    def lone(self):
        r, c = self.spot(self.obj_max + 4)
        kind, region, dims = self.shape(r, c)
        box = self.place(region)
        return region, None, {"shape": kind, **dims, "footprint": list(box)}

    def _hand_over(self, region):
        rows, cols = np.nonzero(region)
        k = self.rng.integers(0, rows.size)
        r = int(rows[k]) - self.rng.integers(0, self.hand)
        c = int(cols[k]) - self.rng.integers(0, self.hand)
        return _rect(self.h, self.w, r, c, self.hand, self.hand)

    def contact(self):
        r, c = self.spot(self.obj_max + 2 * self.hand)
        kind, region, dims = self.shape(r + self.hand, c + self.hand)
        hand = self._hand_over(region)
        box = self.place(region, hand)
        return region, hand | region, {"shape": kind, **dims, "footprint": list(box)}

    def straddle(self):
        r, c = self.spot(self.obj_max + 2 * self.hand)
        kind, region, dims = self.shape(r + self.hand, c + self.hand)
        for _ in range(20):
            hand = self._hand_over(region)
            # keep some of the object outside the hand's box
            if (region & ~hand).any():
                break
        else:
            raise _Retry
        box = self.place(region, hand)
        return region, hand, {"shape": kind, **dims, "footprint": list(box)}

    def bracket(self):
        """L-shaped arm with an object tucked into its open corner."""
        L = self.arm
        r, c = self.spot(L + self.obj_max + 2)
        arm = np.zeros((self.h, self.w), dtype=bool)
        arm[r:r + 2, c:c + L] = True
        arm[r:r + L, c:c + 2] = True
        flip_r, flip_c = self.rng.bernoulli(0.5), self.rng.bernoulli(0.5)
        off_r = self.rng.integers(3, L - 2)
        off_c = self.rng.integers(3, L - 2)
        kind, region, dims = self.shape(r + off_r, c + off_c)
        # mirror the whole unit about its own footprint
        box = _footprint(arm, region)
        if flip_r:
            arm[box[0]:box[2] + 1] = arm[box[0]:box[2] + 1][::-1]
            region[box[0]:box[2] + 1] = region[box[0]:box[2] + 1][::-1]
        if flip_c:
            arm[:, box[1]:box[3] + 1] = arm[:, box[1]:box[3] + 1][:, ::-1]
            region[:, box[1]:box[3] + 1] = region[:, box[1]:box[3] + 1][:, ::-1]
        if (region & arm).any():
            raise _Retry
        box = self.place(region, arm)
        return region, arm, {"shape": kind, **dims, "footprint": list(box),
                             "flip": [bool(flip_r), bool(flip_c)]}

    def free_hand(self):
        r, c = self.spot(self.hand + 2)
        hand = _rect(self.h, self.w, r, c, self.hand, self.hand)
        box = self.place(hand)
        return hand, {"footprint": list(box)}


class _Retry(Exception):
    pass


def _roles(params: SynthParams, rng: CounterRNG) -> list[str]:
    if params.forced_roles is not None:
        return list(params.forced_roles)
    lo, hi = params.objects_per_clip
    n = rng.integers(lo, hi + 1)
    roles = [NARRATION] if rng.bernoulli(0.75) else []
    pool = (HAND_CONTACT, HAND_CONTACT, BBOX_INTERSECT, BBOX_INTERSECT, NEGATIVE, NEGATIVE, NEGATIVE)
    while len(roles) < n:
        roles.append(rng.choice(pool))
    roles = roles[:n]
    if n >= 2 and NEGATIVE not in roles:
        roles[-1] = NEGATIVE
    return rng.sample(roles, len(roles))


def _names(params: SynthParams, rng: CounterRNG, roles: list[str]) -> tuple[list[str], str, list[str]]:
    nouns = sorted(set(" ".join(n.lower().split()) for n in params.nouns))
    if len(nouns) < len(roles) + 1:
        raise SynthError(f"noun list has {len(nouns)} entries, need {len(roles) + 1}")
    for _ in range(params.max_retries):
        picked = rng.sample(nouns, len(roles) + 1)
        names, spare = picked[:-1], picked[-1]
        verb = rng.choice(params.verbs)
        if NARRATION in roles:
            target = names[roles.index(NARRATION)]
        else:
            target = spare
        narration = f"{verb} {target}"
        ok = all(
            narration_mentions(name, narration) == (role == NARRATION)
            for name, role in zip(names, roles)
        )
        if ok:
            return names, narration, [target] if NARRATION in roles else []
    raise SynthError("could not choose object names consistent with the narration")


def generate_clip(params: SynthParams, index: int) -> tuple[ActionClip, ClipTruth]:
    """Generate clip ``index`` of the suite; independent of the other clips."""
    rng = CounterRNG(params.seed).spawn(index)
    clip_id = f"clip{index:04d}"
    roles = _roles(params, rng)
    names, narration, injected = _names(params, rng, roles)
    F = params.frames_per_clip
    for _ in range(params.max_retries):
        try:
            return _assemble(params, rng, clip_id, roles, names, narration, injected, F)
        except _Retry:
            continue
    raise SynthError(f"{clip_id}: placement failed after {params.max_retries} attempts")


def _assemble(params, rng, clip_id, roles, names, narration, injected, F):
    b = _Builder(params, rng)
    h, w = params.height, params.width
    # leave the last frame without hands in about a third of multi-frame clips
    empty_last = F >= 2 and rng.bernoulli(0.35)
    key_hi = F - 1 if empty_last else F

    regions, hands, records = {}, [], {}
    # geometric units first, they need the most room
    order = sorted(range(len(roles)), key=lambda i: roles[i] in (NARRATION, NEGATIVE))
    for i in order:
        oid = i + 1
        role = roles[i]
        key = rng.integers(0, key_hi)
        if role == HAND_CONTACT:
            region, comp, rec = b.contact()
        elif role == BBOX_INTERSECT:
            region, comp, rec = b.bracket()
        elif role == NARRATION:
            variant = rng.choice(("far", "straddle", "held"))
            if variant == "far":
                region, comp, rec = b.lone()
            elif variant == "straddle":
                region, comp, rec = b.straddle()
            else:
                region, comp, rec = b.contact()
            rec["variant"] = variant
        else:
            region, comp, rec = b.lone()
        regions[oid] = region
        rec.update(role=role, key_frame=key)
        records[oid] = rec
        if comp is not None:
            hands.append({"mask": comp, "object": oid, "key_frame": key})

    if rng.bernoulli(0.5):
        try:
            comp, rec = b.free_hand()
            hands.append({"mask": comp, "object": None, "key_frame": rng.integers(0, key_hi)})
        except _Retry:
            pass

    present = {}
    for oid, rec in records.items():
        present[oid] = sorted(
            t for t in range(F) if t == rec["key_frame"] or rng.bernoulli(0.7)
        )
        rec["frames_present"] = present[oid]
    active = []
    for unit in hands:
        frames = [t for t in range(F) if t == unit["key_frame"] or rng.bernoulli(0.5)]
        if empty_last:
            frames = [t for t in frames if t != F - 1]
        active.append(frames)

    frame_records = []
    for t in range(F):
        label = np.zeros((h, w), dtype=np.uint8)
        for oid, region in regions.items():
            if t in present[oid]:
                label[region] = oid
        hand_mask = np.zeros((h, w), dtype=bool)
        for unit, frames in zip(hands, active):
            if t in frames:
                m = unit["mask"]
                oid = unit["object"]
                held = oid is not None and (
                    records[oid]["role"] == HAND_CONTACT or records[oid].get("variant") == "held"
                )
                if held:
                    # a held object joins the hand-object mask only when visible
                    m = m & ~regions[oid]
                    if t in present[oid]:
                        m = m | regions[oid]
                hand_mask |= m
        frame_records.append(FrameRecord(t, label, hand_mask))

    objects = [ObjectEntry(i + 1, names[i]) for i in range(len(roles))]
    clip = ActionClip(clip_id, narration, objects, frame_records, h, w)
    truth = ClipTruth(
        clip_id,
        cls={oid: int(rec["role"] != NEGATIVE) for oid, rec in records.items()},
        reason={oid: rec["role"] for oid, rec in records.items()},
        placements={oid: records[oid] for oid in sorted(records)},
        hand_units=[
            {"object": u["object"], "key_frame": u["key_frame"], "active_frames": a}
            for u, a in zip(hands, active)
        ],
        injected_names=injected,
        empty_hand_frames=[t for t in range(F) if not frame_records[t].hand_object.any()],
    )
    return clip, truth


def generate(params: SynthParams = SynthParams()) -> tuple[list[ActionClip], SynthTruth]:
    pairs = [generate_clip(params, i) for i in range(params.clips)]
    return [c for c, _ in pairs], SynthTruth([t for _, t in pairs])


def generate_predictions(clips, truth: SynthTruth, mode: str = "perfect",
                         sigma: float = 0.1, seed: int = 0) -> list[PredictionSet]:
    """Model-free predictions with known quality.

    ``perfect``: truth-positive objects get their region and score 1, negatives
    an empty mask and score 0. ``empty``: empty masks, score 0. ``leaky``:
    every object gets its region (segment-everything behaviour) with
    truth-aligned scores. ``noisy``: Gaussian jitter of width ``sigma`` on the
    perfect rasters and scores, clipped to [0, 1], stored as probabilities.
    """
    if mode not in PREDICTION_MODES:
        raise ValueError(f"mode must be one of {PREDICTION_MODES}, got {mode!r}")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    by_clip = truth.by_clip()
    out = []
    for ci, clip in enumerate(clips):
        tr = by_clip[clip.clip_id]
        rng = CounterRNG(seed).spawn(ci)
        pset = PredictionSet(clip.clip_id, clip.height, clip.width, tuple(f.t for f in clip.frames))
        for obj in clip.objects:
            pos = tr.cls[obj.id]
            frames = {}
            for f in clip.frames:
                region = f.label_map == obj.id
                if mode == "empty":
                    frames[f.t] = np.zeros_like(region)
                elif mode == "leaky":
                    frames[f.t] = region
                else:
                    target = region if pos else np.zeros_like(region)
                    if mode == "perfect":
                        frames[f.t] = target
                    else:
                        noise = rng.normal_array(region.shape) * sigma
                        frames[f.t] = np.clip(target + noise, 0.0, 1.0).astype(np.float32)
            if mode == "empty":
                score = 0.0
            elif mode == "noisy":
                score = float(np.clip(pos + sigma * rng.normal_array((1,))[0], 0.0, 1.0))
            else:
                score = float(pos)
            pset.scores[obj.id] = score
            pset.rasters[obj.id] = frames
        out.append(pset)
    return out
