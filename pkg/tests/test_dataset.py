import json
import os

import numpy as np
import pytest

from activeseg import formats
from activeseg.dataset import (
    DatasetError, PredictionSet, WeightRaster, load_manifest, load_positivity, load_predictions,
    load_pseudo_labels, read_weight_raster, vocab_stats, write_manifest, write_predictions,
    write_pseudo_labels, write_weight_raster,
)
from activeseg.formats import FormatError
from activeseg.labeling import build_pseudo_labels
from activeseg.synth import SynthParams, generate, generate_predictions
from conftest import make_clip


def _tiny_clip(**kw):
    lm = np.zeros((4, 5), np.uint8)
    lm[1:3, 1:3] = 1
    lm[3, 4] = 2
    hands = np.zeros((4, 5), bool)
    hands[0, 0] = True
    return make_clip([lm], [hands], [(1, "knife"), (2, "apple")], **kw)


class TestPgm:
    def test_round_trip_bytes(self, tmp_path):
        img = np.arange(20, dtype=np.uint8).reshape(4, 5) * 12
        p = tmp_path / "a.pgm"
        formats.write_pgm(p, img)
        assert p.read_bytes() == b"P5\n5 4\n255\n" + img.tobytes()
        assert np.array_equal(formats.read_pgm(p), img)

    def test_header_comments(self, tmp_path):
        p = tmp_path / "c.pgm"
        p.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
        assert formats.read_pgm(p).tolist() == [[0, 255]]

    def test_truncated(self, tmp_path):
        p = tmp_path / "t.pgm"
        p.write_bytes(b"P5\n3 3\n255\n\x00\x00")
        with pytest.raises(FormatError, match="expected 9"):
            formats.read_pgm(p)

    def test_wrong_magic(self, tmp_path):
        p = tmp_path / "x.pgm"
        p.write_bytes(b"P2\n1 1\n255\n0")
        with pytest.raises(FormatError):
            formats.read_pgm(p)


class TestRasters:
    def test_all_ones(self, tmp_path):
        w = WeightRaster(np.ones((3, 4)))
        write_weight_raster(tmp_path / "w.wmap", w)
        assert read_weight_raster(tmp_path / "w.wmap") == w

    def test_small_integers_exact(self, tmp_path):
        w = WeightRaster(np.array([[1, 2, 5], [5, 2, 1]], dtype=np.float32))
        write_weight_raster(tmp_path / "w.wmap", w)
        back = read_weight_raster(tmp_path / "w.wmap")
        assert back.values.tolist() == [[1, 2, 5], [5, 2, 1]]

    def test_random_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        for i in range(20):
            vals = rng.standard_normal((rng.integers(1, 9), rng.integers(1, 9))).astype(np.float32)
            p = tmp_path / f"r{i}.wmap"
            write_weight_raster(p, WeightRaster(vals))
            assert p.read_bytes()[12:] == vals.astype("<f4").tobytes()
            assert read_weight_raster(p).values.tobytes() == vals.tobytes()

    def test_layout(self, tmp_path):
        p = tmp_path / "l.wmap"
        write_weight_raster(p, WeightRaster(np.full((2, 3), 2.0)))
        data = p.read_bytes()
        assert data[:4] == b"WMAP"
        assert data[4:12] == (2).to_bytes(4, "little") + (3).to_bytes(4, "little")
        assert len(data) == 12 + 4 * 6

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "b.wmap"
        p.write_bytes(b"XXXX" + bytes(12))
        with pytest.raises(FormatError, match="magic"):
            read_weight_raster(p)

    def test_truncated(self, tmp_path):
        p = tmp_path / "t.wmap"
        write_weight_raster(p, WeightRaster(np.ones((2, 2))))
        p.write_bytes(p.read_bytes()[:-1])
        with pytest.raises(FormatError, match="payload"):
            read_weight_raster(p)

    def test_pmap_is_not_wmap(self, tmp_path):
        p = tmp_path / "p.pmap"
        formats.write_raster(p, np.zeros((1, 1)), formats.PROB_MAGIC)
        with pytest.raises(FormatError):
            read_weight_raster(p)


class TestManifest:
    def test_round_trip(self, tmp_path):
        clip = _tiny_clip()
        write_manifest(tmp_path / "m.json", [clip])
        loaded = load_manifest(tmp_path / "m.json")
        assert loaded == [clip]

    def test_synth_round_trip(self, tmp_path):
        clips, _ = generate(SynthParams(clips=3))
        write_manifest(tmp_path / "m.json", clips)
        assert load_manifest(tmp_path / "m.json") == clips

    def test_unknown_id_names_clip_and_frame(self, tmp_path):
        write_manifest(tmp_path / "m.json", [_tiny_clip()])
        doc = json.loads((tmp_path / "m.json").read_text())
        doc["clips"][0]["objects"] = [{"id": 1, "name": "knife"}]
        (tmp_path / "m.json").write_text(json.dumps(doc))
        with pytest.raises(DatasetError, match=r"clip 'c0' frame 0.*\[2\]"):
            load_manifest(tmp_path / "m.json")

    def test_id_out_of_range(self, tmp_path):
        write_manifest(tmp_path / "m.json", [_tiny_clip()])
        doc = json.loads((tmp_path / "m.json").read_text())
        doc["clips"][0]["objects"].append({"id": 300, "name": "pan"})
        (tmp_path / "m.json").write_text(json.dumps(doc))
        with pytest.raises(DatasetError, match="300"):
            load_manifest(tmp_path / "m.json")

    def test_missing_mask_file(self, tmp_path):
        write_manifest(tmp_path / "m.json", [_tiny_clip()])
        os.remove(tmp_path / "masks" / "c0" / "t0000_hands.pgm")
        with pytest.raises(DatasetError, match="frame 0: missing file"):
            load_manifest(tmp_path / "m.json")

    def test_dimension_mismatch(self, tmp_path):
        write_manifest(tmp_path / "m.json", [_tiny_clip()])
        formats.write_pgm(tmp_path / "masks" / "c0" / "t0000_hands.pgm", np.zeros((3, 3), bool))
        with pytest.raises(DatasetError, match="hand-object mask"):
            load_manifest(tmp_path / "m.json")

    def test_hand_mask_must_be_binary(self, tmp_path):
        write_manifest(tmp_path / "m.json", [_tiny_clip()])
        formats.write_pgm(tmp_path / "masks" / "c0" / "t0000_hands.pgm", np.full((4, 5), 7, np.uint8))
        with pytest.raises(DatasetError, match="0/255"):
            load_manifest(tmp_path / "m.json")

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetError, match="nowhere.json"):
            load_manifest(tmp_path / "nowhere.json")

    def test_unknown_keys_ignored(self, tmp_path):
        write_manifest(tmp_path / "m.json", [_tiny_clip()], extra={"note": "hi"})
        doc = json.loads((tmp_path / "m.json").read_text())
        doc["clips"][0]["camera"] = "head"
        (tmp_path / "m.json").write_text(json.dumps(doc))
        assert len(load_manifest(tmp_path / "m.json")) == 1


class TestPredictions:
    def test_synth_round_trip(self, tmp_path):
        clips, truth = generate(SynthParams(clips=3))
        for mode in ("perfect", "noisy"):
            preds = generate_predictions(clips, truth, mode, sigma=0.3)
            write_predictions(tmp_path / f"{mode}.json", preds)
            assert load_predictions(tmp_path / f"{mode}.json", clips) == preds
            assert load_predictions(tmp_path / f"{mode}.json") == preds

    def test_out_of_range_probability(self, tmp_path):
        clip = _tiny_clip()
        pset = PredictionSet("c0", 4, 5, (0,), {1: 0.9}, {1: {0: np.full((4, 5), 1.5, np.float32)}})
        write_predictions(tmp_path / "p.json", [pset])
        with pytest.raises(DatasetError, match=r"outside \[0, 1\]"):
            load_predictions(tmp_path / "p.json", [clip])

    def test_unknown_clip(self, tmp_path):
        pset = PredictionSet("zz", 4, 5, (0,), {1: 0.9}, {})
        write_predictions(tmp_path / "p.json", [pset])
        with pytest.raises(DatasetError, match="unknown clip"):
            load_predictions(tmp_path / "p.json", [_tiny_clip()])

    def test_quantized_pgm_probabilities(self, tmp_path):
        clip = _tiny_clip()
        formats.write_pgm(tmp_path / "q.pgm", np.full((4, 5), 128, np.uint8))
        doc = {"predictions": [{"clip_id": "c0", "objects": [
            {"id": 1, "cls_score": 0.5, "frames": [{"t": 0, "raster": "q.pgm"}]}]}]}
        (tmp_path / "p.json").write_text(json.dumps(doc))
        (pset,) = load_predictions(tmp_path / "p.json", [clip])
        assert pset.raster(1, 0).dtype == np.float32
        assert np.allclose(pset.raster(1, 0), 128 / 255)
        # missing objects read as all-zero
        assert not pset.raster(2, 0).any()


class TestPseudoLabels:
    def test_round_trip(self, tmp_path):
        clips, _ = generate(SynthParams(clips=2))
        labels = [build_pseudo_labels(c) for c in clips]
        write_pseudo_labels(tmp_path / "pl.json", labels, clips)
        back = load_pseudo_labels(tmp_path / "pl.json")
        assert back == labels
        assert back[0].config == labels[0].config
        bits = load_positivity(tmp_path / "pl.json")
        assert bits[clips[0].clip_id] == labels[0].cls

    def test_positivity_from_hand_labels(self, tmp_path):
        (tmp_path / "l.json").write_text(json.dumps(
            {"clips": [{"clip_id": "c0", "objects": [{"id": 1, "positive": True}, {"id": 2, "positive": 0}]}]}))
        assert load_positivity(tmp_path / "l.json") == {"c0": {1: 1, 2: 0}}

    def test_positivity_missing_bit(self, tmp_path):
        (tmp_path / "l.json").write_text(json.dumps({"clips": [{"clip_id": "c0", "objects": [{"id": 1}]}]}))
        with pytest.raises(DatasetError, match="object 1: no positivity"):
            load_positivity(tmp_path / "l.json")


def _vocab_clip(cid, narration, names):
    lm = np.zeros((2, 2), np.uint8)
    return make_clip([lm], [np.zeros((2, 2), bool)], list(enumerate(names, 1)), narration, cid)


TRAIN = [
    ("t1", "cut apple", ["knife", "apple"]),
    ("t2", "open fridge", ["fridge", "milk"]),
    ("t3", "cut onion", ["knife", "onion", "cutting board"]),
]
VAL = [
    ("v1", "cut apple", ["knife", "apple"]),
    ("v2", "wash pan", ["pan", "sponge"]),
]


class TestVocab:
    def test_hand_counted(self):
        train = [_vocab_clip(*c) for c in TRAIN]
        val = [_vocab_clip(*c) for c in VAL]
        s = vocab_stats(train, val)
        # train: actions {cut apple, open fridge, cut onion}; verbs {cut, open};
        # nouns {apple, fridge, onion, knife, milk, cutting board}
        assert (s.train_actions, s.train_verbs, s.train_nouns) == (3, 2, 6)
        # val: actions {cut apple, wash pan}; verbs {cut, wash}; nouns {apple, pan, knife, sponge}
        assert (s.val_actions, s.val_verbs, s.val_nouns) == (2, 2, 4)
        # unseen: {wash pan}, {wash}, {pan, sponge}
        assert (s.unseen_actions, s.unseen_verbs, s.unseen_nouns) == (1, 1, 2)

    def test_val_equals_train(self):
        clips = [_vocab_clip(*c) for c in TRAIN]
        s = vocab_stats(clips, clips)
        assert (s.unseen_actions, s.unseen_verbs, s.unseen_nouns) == (0, 0, 0)

    def test_empty_val(self):
        s = vocab_stats([_vocab_clip(*c) for c in TRAIN], [])
        assert (s.val_actions, s.val_verbs, s.val_nouns) == (0, 0, 0)
        assert (s.unseen_actions, s.unseen_verbs, s.unseen_nouns) == (0, 0, 0)

    def test_order_insensitive(self):
        train = [_vocab_clip(*c) for c in TRAIN]
        val = [_vocab_clip(*c) for c in VAL]
        assert vocab_stats(train, val) == vocab_stats(train[::-1], val[::-1])
