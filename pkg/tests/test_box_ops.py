import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from datagen import random_prediction_set
from oracles import iou_monte_carlo, nms_ref
from pseudoloop import (
    BBox,
    Detection,
    PredictionSet,
    class_wise_nms,
    filter_by_score,
    iou,
    parse_predictions,
    serialize_predictions,
)
from pseudoloop.errors import MalformedPredictionsError

coords = st.floats(min_value=-1e4, max_value=1e4, allow_nan=False, width=64)
sizes = st.floats(min_value=1e-2, max_value=1e3, allow_nan=False, width=64)
boxes = st.builds(BBox, x=coords, y=coords, w=sizes, h=sizes)


class TestIou:
    def test_identity(self):
        for box in (BBox(0, 0, 10, 10), BBox(-5, 3, 0.5, 120)):
            assert iou(box, box) == 1.0

    def test_disjoint(self):
        assert iou(BBox(0, 0, 10, 10), BBox(20, 20, 5, 5)) == 0.0

    def test_touching_edges_is_zero(self):
        assert iou(BBox(0, 0, 10, 10), BBox(10, 0, 10, 10)) == 0.0

    def test_quarter_overlap_exact(self):
        # inclusion-exclusion: inter 5x5=25, union 100+100-25=175
        value = iou(BBox(0, 0, 10, 10), BBox(5, 5, 10, 10))
        assert value == pytest.approx(25 / 175, abs=1e-12)

    def test_quarter_overlap_monte_carlo(self):
        rng = np.random.default_rng(0)
        estimate = iou_monte_carlo(BBox(0, 0, 10, 10), BBox(5, 5, 10, 10),
                                   n=1_000_000, rng=rng)
        assert abs(estimate - 25 / 175) < 1e-2

    @given(boxes, boxes)
    @settings(deadline=None)
    def test_symmetry(self, a, b):
        assert iou(a, b) == iou(b, a)

    @given(boxes, boxes)
    @settings(deadline=None)
    def test_bounds(self, a, b):
        value = iou(a, b)
        assert 0.0 <= value <= 1.0

    @given(boxes)
    @settings(deadline=None)
    def test_identical_geometry_gives_one(self, box):
        assert iou(box, BBox(box.x, box.y, box.w, box.h)) == 1.0

    def test_clearly_different_boxes_below_one(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            a = BBox(*rng.uniform(0, 50, 2), *rng.uniform(5, 30, 2))
            b = BBox(a.x + 1.0, a.y, a.w, a.h)
            assert iou(a, b) < 1.0


def preds_of(scores, **kw) -> PredictionSet:
    dets = tuple(Detection(image_id=kw.get("image_id", 1),
                           category_id=kw.get("category_id", 1),
                           bbox=BBox(10 * i, 0, 5, 5), score=s)
                 for i, s in enumerate(scores))
    return PredictionSet(dets, round=kw.get("round", 2))


class TestFilterByScore:
    def test_zero_threshold_is_identity(self):
        p = preds_of([0.1, 0.5, 0.9])
        assert filter_by_score(p, 0.0) == p

    def test_boundary_is_inclusive(self):
        p = preds_of([0.3, 0.6, 0.9])
        kept = filter_by_score(p, 0.6)
        assert [d.score for d in kept.detections] == [0.6, 0.9]

    def test_round_preserved(self):
        assert filter_by_score(preds_of([0.5], round=3), 0.9).round == 3

    def test_matches_bruteforce_on_random_sets(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            p = random_prediction_set(rng)
            tau = float(rng.random())
            expected = [d for d in p.detections if d.score >= tau]
            assert list(filter_by_score(p, tau).detections) == expected

    @given(st.lists(st.floats(0, 1, allow_nan=False), max_size=30),
           st.floats(0, 1, allow_nan=False), st.floats(0, 1, allow_nan=False))
    @settings(deadline=None)
    def test_monotone(self, scores, t1, t2):
        lo, hi = min(t1, t2), max(t1, t2)
        p = preds_of(scores)
        tight = set(filter_by_score(p, hi).detections)
        loose = set(filter_by_score(p, lo).detections)
        assert tight <= loose


class TestClassWiseNms:
    def test_overlapping_same_class(self):
        a = Detection(1, 1, BBox(0, 0, 10, 10), 0.9)
        b = Detection(1, 1, BBox(1, 1, 10, 10), 0.7)  # iou ~0.68
        kept = class_wise_nms(PredictionSet((a, b)), 0.5)
        assert kept.detections == (a,)

    def test_different_classes_never_suppress(self):
        a = Detection(1, 1, BBox(0, 0, 10, 10), 0.9)
        b = Detection(1, 2, BBox(0, 0, 10, 10), 0.7)
        kept = class_wise_nms(PredictionSet((a, b)), 0.1)
        assert set(kept.detections) == {a, b}

    def test_different_images_never_suppress(self):
        a = Detection(1, 1, BBox(0, 0, 10, 10), 0.9)
        b = Detection(2, 1, BBox(0, 0, 10, 10), 0.7)
        kept = class_wise_nms(PredictionSet((a, b)), 0.1)
        assert set(kept.detections) == {a, b}

    def test_tau_one_suppresses_nothing(self):
        a = Detection(1, 1, BBox(0, 0, 10, 10), 0.9)
        b = Detection(1, 1, BBox(0, 0, 10, 10), 0.8)  # exact duplicate, iou 1.0
        c = Detection(1, 1, BBox(2, 2, 10, 10), 0.7)
        kept = class_wise_nms(PredictionSet((a, b, c)), 1.0)
        # suppression is strict (iou > tau_n), so 1.0 is never exceeded
        assert set(kept.detections) == {a, b, c}

    def test_just_below_one_suppresses_only_exact_duplicates(self):
        a = Detection(1, 1, BBox(0, 0, 10, 10), 0.9)
        b = Detection(1, 1, BBox(0, 0, 10, 10), 0.8)   # duplicate geometry
        c = Detection(1, 1, BBox(0.01, 0, 10, 10), 0.7)  # near-duplicate
        tau = 1.0 - 1e-12
        kept = class_wise_nms(PredictionSet((a, b, c)), tau)
        assert set(kept.detections) == {a, c}

    def test_tie_break_earlier_index_wins(self):
        a = Detection(1, 1, BBox(0, 0, 10, 10), 0.8)
        b = Detection(1, 1, BBox(1, 1, 10, 10), 0.8)
        kept = class_wise_nms(PredictionSet((a, b)), 0.5)
        assert kept.detections == (a,)

    def test_matches_reference_on_random_scenes(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            p = random_prediction_set(rng, max_dets=50, span=100.0)
            tau = float(rng.choice([0.1, 0.3, 0.5, 0.7, 0.9]))
            kept = class_wise_nms(p, tau)
            expected = nms_ref(p.detections, tau)
            got = sorted((d.image_id, d.category_id, d.score,
                          d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h)
                         for d in kept.detections)
            want = sorted((p.detections[i].image_id, p.detections[i].category_id,
                           p.detections[i].score, p.detections[i].bbox.x,
                           p.detections[i].bbox.y, p.detections[i].bbox.w,
                           p.detections[i].bbox.h) for i in expected)
            assert got == want

    def test_output_subset_and_pairwise_bound(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            p = random_prediction_set(rng, max_dets=30, span=80.0)
            kept = class_wise_nms(p, 0.5)
            assert set(kept.detections) <= set(p.detections)
            by_group = {}
            for d in kept.detections:
                by_group.setdefault((d.image_id, d.category_id), []).append(d)
            for group in by_group.values():
                for i in range(len(group)):
                    for j in range(i + 1, len(group)):
                        assert iou(group[i].bbox, group[j].bbox) <= 0.5

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            p = random_prediction_set(rng, max_dets=30, span=80.0)
            once = class_wise_nms(p, 0.5)
            assert class_wise_nms(once, 0.5) == once

    def test_output_sorted(self):
        rng = np.random.default_rng(5)
        p = random_prediction_set(rng, max_dets=40)
        kept = class_wise_nms(p, 0.5)
        keys = [(d.image_id, d.category_id, -d.score) for d in kept.detections]
        assert keys == sorted(keys)


class TestPredictionIo:
    def test_bare_array_accepted(self):
        blob = b'[{"image_id":1,"category_id":2,"bbox":[1,2,3,4],"score":0.5}]'
        preds = parse_predictions(blob)
        assert len(preds) == 1
        assert preds.detections[0].bbox == BBox(1, 2, 3, 4)

    def test_wrapper_roundtrip(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            p = random_prediction_set(rng)
            again = parse_predictions(serialize_predictions(p))
            assert again == p

    def test_malformed(self):
        for blob in (b"{", b'{"detections": 3}', b'[{"image_id": 1}]',
                     b'[{"image_id":1,"category_id":1,"bbox":[1,2,3],"score":0.5}]',
                     b'[{"image_id":1,"category_id":1,"bbox":[1,2,3,4],"score":1.5}]'):
            with pytest.raises(MalformedPredictionsError):
                parse_predictions(blob)
