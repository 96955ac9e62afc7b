import numpy as np
import pytest

from activeseg.dataset import PredictionSet
from activeseg.metrics import (
    METRICS, EvalLabels, compare_reports, compute_report, per_object_iou, write_csv,
)
from activeseg.postprocess import PostprocessConfig, apply_threshold
from activeseg.synth import generate_predictions
from oracles import pixel_loop_metrics


def random_instance(rng, n_clips=None, gate=True):
    """Random labels and (by default post-processed) predictions on tiny rasters."""
    labels, preds = [], []
    for ci in range(n_clips or int(rng.integers(1, 4))):
        h, w = (int(v) for v in rng.integers(2, 7, 2))
        frames = tuple(range(int(rng.integers(1, 4))))
        n_obj = int(rng.integers(1, 5))
        positive, regions = {}, {}
        pred = PredictionSet(f"c{ci}", h, w, frames)
        for oid in range(1, n_obj + 1):
            positive[oid] = int(rng.random() < 0.5)
            regions[oid] = {t: rng.random((h, w)) < rng.uniform(0, 0.6) for t in frames}
            pred.scores[oid] = float(rng.choice([0.1, 0.5, 0.75, 0.9]))
            pred.rasters[oid] = {t: rng.random((h, w)).astype(np.float32) for t in frames}
        labels.append(EvalLabels(f"c{ci}", positive, regions))
        preds.append(apply_threshold(pred) if gate else pred)
    return preds, labels


def oracle_rows(preds, labels, theta=0.75):
    by = {p.clip_id: p for p in preds}
    rows = []
    for lab in labels:
        p = by[lab.clip_id]
        for oid in lab.regions:
            ts = sorted(lab.regions[oid])
            rows.append((
                lab.positive[oid],
                int(p.scores[oid] >= theta),
                [np.asarray(p.raster(oid, t)) for t in ts],
                [lab.regions[oid][t] for t in ts],
            ))
    return rows


def _frame(h, w, cells):
    m = np.zeros((h, w), bool)
    for r, c in cells:
        m[r, c] = True
    return m


class TestPerObjectIoU:
    def test_identity_and_empty(self):
        g = [_frame(3, 3, [(0, 0), (1, 1)])]
        assert per_object_iou(g, g) == 1.0
        assert per_object_iou([np.zeros((3, 3))], g) == 0.0
        assert per_object_iou([np.zeros((3, 3))], [np.zeros((3, 3))]) == 1.0

    def test_two_frame_pooling(self):
        # frame 0: overlap 2, union 6; frame 1: overlap 3, union 4
        p0 = _frame(2, 4, [(0, 0), (0, 1), (0, 2), (0, 3)])
        g0 = _frame(2, 4, [(0, 2), (0, 3), (1, 0), (1, 1)])
        p1 = _frame(2, 4, [(0, 0), (0, 1), (0, 2)])
        g1 = _frame(2, 4, [(0, 0), (0, 1), (0, 2), (1, 3)])
        assert per_object_iou([p0], [g0]) == pytest.approx(2 / 6)
        assert per_object_iou([p1], [g1]) == pytest.approx(3 / 4)
        assert per_object_iou([p0, p1], [g0, g1]) == 0.5

    def test_frame_count_mismatch(self):
        with pytest.raises(ValueError):
            per_object_iou([np.zeros((2, 2))], [])


class TestOracle:
    def test_random_instances(self):
        rng = np.random.default_rng(31)
        for _ in range(60):
            preds, labels = random_instance(rng)
            rep = compute_report(preds, labels)
            ref = pixel_loop_metrics(oracle_rows(preds, labels))
            for k in METRICS:
                assert rep.metrics()[k] == pytest.approx(ref[k], rel=1e-12, abs=1e-12), k

    def test_permutation_invariant(self):
        rng = np.random.default_rng(32)
        preds, labels = random_instance(rng, n_clips=3)
        a = compute_report(preds, labels)
        b = compute_report(preds[::-1], labels[::-1])
        assert a.metrics() == b.metrics()
        assert a.rows == b.rows


def _three_object_fixture():
    """TP (obj 1), TN (obj 2), FP (obj 3) in one 4x4 frame."""
    region = {o: {0: _frame(4, 4, [(o - 1, 0), (o - 1, 1)])} for o in (1, 2, 3)}
    labels = EvalLabels("c", {1: 1, 2: 0, 3: 0}, region)
    pred = PredictionSet("c", 4, 4, (0,), {1: 0.9, 2: 0.1, 3: 0.8},
                         {o: {0: region[o][0].copy()} for o in (1, 2, 3)})
    return [apply_threshold(pred)], [labels]


class TestReport:
    def test_acc_hand_count(self):
        rep = compute_report(*_three_object_fixture())
        assert (rep.tp, rep.tn, rep.fp, rep.fn) == (1, 1, 1, 0)
        assert rep.acc == 2 / 3
        # the TN object was gated to empty, the FP object kept its region
        assert rep.n_miou == pytest.approx(0.5)
        assert rep.giou == pytest.approx(2 / 3)

    def test_perfect_and_empty(self, default_suite):
        clips, truth = default_suite
        labels = [EvalLabels.from_clip(c, truth.by_clip()[c.clip_id].cls) for c in clips]
        perfect = compute_report([apply_threshold(p) for p in generate_predictions(clips, truth)], labels)
        assert (perfect.p_miou, perfect.p_ciou, perfect.giou, perfect.acc) == (1.0, 1.0, 1.0, 1.0)
        assert (perfect.n_miou, perfect.n_ciou) == (0.0, 0.0)
        empty = compute_report(
            [apply_threshold(p) for p in generate_predictions(clips, truth, "empty")], labels)
        frac = empty.meta["n_negative"] / empty.meta["n_objects"]
        assert empty.giou == frac and empty.acc == frac and empty.p_miou == 0.0

    def test_missing_prediction_counts_as_empty(self):
        preds, labels = _three_object_fixture()
        rep = compute_report([], labels)
        assert (rep.tp, rep.tn, rep.fp, rep.fn) == (0, 2, 0, 1)
        assert rep.p_miou == 0.0

    def test_empty_group_reports_zero(self):
        lab = EvalLabels("c", {1: 1}, {1: {0: _frame(2, 2, [(0, 0)])}})
        pred = PredictionSet("c", 2, 2, (0,), {1: 1.0}, {1: {0: _frame(2, 2, [(0, 0)])}})
        rep = compute_report([pred], [lab])
        assert (rep.n_miou, rep.n_ciou, rep.p_miou) == (0.0, 0.0, 1.0)

    def test_missing_positivity(self):
        lab = EvalLabels("c", {}, {1: {0: np.zeros((2, 2), bool)}})
        with pytest.raises(ValueError):
            compute_report([], [lab])

    def test_csv(self, tmp_path):
        rep = compute_report(*_three_object_fixture())
        write_csv(tmp_path / "r.csv", rep)
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "metric,value"
        assert lines[6] == "acc,0.6666666666666666"
        assert len(lines) == 1 + 6 + 4 + 1 + 1 + 3


class TestCompare:
    def test_self_zero(self):
        rep = compute_report(*_three_object_fixture())
        assert all(v == 0 for v in compare_reports(rep, rep).values())

    def test_flipped_object(self):
        preds, labels = _three_object_fixture()
        a = compute_report(preds, labels)
        preds[0].scores[3] = 0.2
        preds = [apply_threshold(preds[0])]
        b = compute_report(preds, labels)
        d = compare_reports(a, b)
        # object 3 goes FP -> TN and its mask is gated away
        assert d["acc"] == pytest.approx(1 / 3)
        assert d["n_miou"] == pytest.approx(-0.5)
        assert d["n_ciou"] == pytest.approx(-0.5)  # pooled 2/4 -> 0/4
        assert d["giou"] == pytest.approx(1 / 3)
        assert d["p_miou"] == 0.0

    def test_gating_never_raises_negative_iou(self):
        rng = np.random.default_rng(33)
        for _ in range(20):
            raw_preds, labels = random_instance(rng, gate=False)
            for lab in labels:
                # the bound needs every positive to have some annotated area
                for oid, frames in lab.regions.items():
                    frames[0][0, 0] = True
            zero = PostprocessConfig(theta=0.0)
            raw = compute_report([apply_threshold(p, zero) for p in raw_preds], labels, zero)
            gated = compute_report([apply_threshold(p) for p in raw_preds], labels)
            d = compare_reports(raw, gated)
            assert d["n_miou"] <= 0.0 and d["n_ciou"] <= 0.0 and d["p_miou"] <= 0.0

    def test_blank_positive_region_breaks_bound(self):
        # a positive object with no annotated pixels scores 1.0 only when predicted empty
        lab = EvalLabels("c", {1: 1}, {1: {0: np.zeros((2, 2), bool)}})
        pred = PredictionSet("c", 2, 2, (0,), {1: 0.5}, {1: {0: np.ones((2, 2), bool)}})
        zero = PostprocessConfig(theta=0.0)
        raw = compute_report([apply_threshold(pred, zero)], [lab], zero)
        gated = compute_report([apply_threshold(pred)], [lab])
        assert (raw.p_miou, gated.p_miou) == (0.0, 1.0)

    def test_different_objects(self):
        preds, labels = _three_object_fixture()
        a = compute_report(preds, labels)
        del labels[0].regions[3]
        with pytest.raises(ValueError):
            compare_reports(a, compute_report(preds, labels))
