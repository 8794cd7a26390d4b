import numpy as np
import pytest

from pseudoloop import (
    AnnotationRecord,
    BBox,
    CategoryRecord,
    Dataset,
    ImageRecord,
    SimulatorConfig,
    World,
    coverage,
    iou,
    load_world,
    make_world,
    save_world,
    serialize_dataset,
    simulate_predictions,
    supervision_quality,
    validate,
)
from pseudoloop.errors import InvalidConfigError

DEFAULT_WORLD = dict(n_images=20, n_classes=3, instances_per_image=(3, 6),
                     k_shot=1, seed=123)


@pytest.fixture(scope="module")
def world() -> World:
    return make_world(**DEFAULT_WORLD)


class TestMakeWorld:
    def test_same_seed_is_byte_identical(self):
        a = make_world(**DEFAULT_WORLD)
        b = make_world(**DEFAULT_WORLD)
        for left, right in ((a.hidden_gt, b.hidden_gt),
                            (a.visible_train, b.visible_train),
                            (a.query_gt, b.query_gt)):
            assert serialize_dataset(left) == serialize_dataset(right)

    def test_different_seed_differs(self):
        a = make_world(**DEFAULT_WORLD)
        b = make_world(**{**DEFAULT_WORLD, "seed": 124})
        assert serialize_dataset(a.hidden_gt) != serialize_dataset(b.hidden_gt)

    def test_k_shot_equal_to_total_takes_everything(self):
        # one class, one train image with exactly 2 instances
        w = make_world(n_images=2, n_classes=1, instances_per_image=(2, 2),
                       k_shot=2, seed=5)
        assert w.visible_train == w.hidden_gt

    def test_world_validates_and_overlap_bound(self, world):
        for ds in (world.hidden_gt, world.visible_train, world.query_gt):
            assert validate(ds) == []
        for ds in (world.hidden_gt, world.query_gt):
            by_img_class = {}
            for ann in ds.annotations:
                by_img_class.setdefault(
                    (ann.image_id, ann.category_id), []).append(ann.bbox)
            for boxes in by_img_class.values():
                for i in range(len(boxes)):
                    for j in range(i + 1, len(boxes)):
                        assert iou(boxes[i], boxes[j]) <= 0.3

    def test_split_disjoint_and_sparse_view(self, world):
        train_ids = set(world.hidden_gt.image_ids())
        query_ids = set(world.query_gt.image_ids())
        assert not train_ids & query_ids
        assert len(train_ids) == len(query_ids) == 10
        assert world.visible_train.image_ids() == train_ids
        hidden_keys = {(a.image_id, a.category_id, a.bbox)
                       for a in world.hidden_gt.annotations}
        for ann in world.visible_train.annotations:
            assert (ann.image_id, ann.category_id, ann.bbox) in hidden_keys
        assert len(world.visible_train.annotations) == 3  # k=1 x 3 classes

    def test_bad_parameters(self):
        with pytest.raises(InvalidConfigError):
            make_world(1, 3, (3, 6), 1, 0)
        with pytest.raises(InvalidConfigError):
            make_world(10, 3, (6, 3), 1, 0)


def hand_world() -> World:
    """One train image with 4 instances of one class, k-shot view of 1."""
    images = (ImageRecord(id=1, file_name="t.jpg", width=400, height=400),)
    qimages = (ImageRecord(id=2, file_name="q.jpg", width=400, height=400),)
    cats = (CategoryRecord(id=1, name="c1"),)
    boxes = [BBox(10, 10, 40, 40), BBox(100, 10, 40, 40),
             BBox(10, 100, 40, 40), BBox(100, 100, 40, 40)]
    anns = tuple(AnnotationRecord(id=i + 1, image_id=1, category_id=1, bbox=b)
                 for i, b in enumerate(boxes))
    hidden = Dataset(images, cats, anns)
    visible = Dataset(images, cats, anns[:1])
    query = Dataset(qimages, cats, (AnnotationRecord(
        id=9, image_id=2, category_id=1, bbox=BBox(50, 50, 40, 40)),))
    return World(hidden_gt=hidden, visible_train=visible, query_gt=query)


class TestCoverage:
    def test_full_annotations_give_one(self, world):
        cov = coverage(world.hidden_gt, world.hidden_gt)
        assert set(cov.values()) == {1.0}

    def test_empty_annotations_give_zero(self, world):
        empty = Dataset(world.hidden_gt.images, world.hidden_gt.categories, ())
        cov = coverage(empty, world.hidden_gt)
        assert set(cov.values()) == {0.0}

    def test_one_of_four(self):
        w = hand_world()
        cov = coverage(w.visible_train, w.hidden_gt)
        assert cov == {1: 0.25}

    def test_each_annotation_matches_once(self):
        w = hand_world()
        # two training annotations stacked on the same hidden instance
        dup = w.visible_train.annotations[0]
        doubled = Dataset(w.visible_train.images, w.visible_train.categories,
                          (dup, AnnotationRecord(id=99, image_id=1,
                                                 category_id=1, bbox=dup.bbox)))
        assert coverage(doubled, w.hidden_gt) == {1: 0.25}

    def test_quality_equals_coverage_for_clean_annotations(self, world):
        assert supervision_quality(world.hidden_gt, world.hidden_gt) \
            == coverage(world.hidden_gt, world.hidden_gt)
        w = hand_world()
        assert supervision_quality(w.visible_train, w.hidden_gt) == {1: 0.25}

    def test_quality_penalizes_junk(self):
        w = hand_world()
        junk = tuple(AnnotationRecord(id=50 + k, image_id=1, category_id=1,
                                      bbox=BBox(200 + 10 * k, 300, 8, 8))
                     for k in range(6))
        noisy = Dataset(w.visible_train.images, w.visible_train.categories,
                        w.visible_train.annotations + junk)
        clean_value = supervision_quality(w.visible_train, w.hidden_gt)[1]
        noisy_value = supervision_quality(noisy, w.hidden_gt)[1]
        assert noisy_value < clean_value
        # recall-style coverage is unchanged by the junk
        assert coverage(noisy, w.hidden_gt) == coverage(w.visible_train,
                                                        w.hidden_gt)


def flat(world, value):
    return {c: value for c in world.category_ids()}


class TestSimulatePredictions:
    def test_deterministic(self, world):
        cfg = SimulatorConfig(seed=9)
        ids = world.train_image_ids()
        a = simulate_predictions(world, flat(world, 0.5), cfg, ids, 1)
        b = simulate_predictions(world, flat(world, 0.5), cfg, ids, 1)
        assert a == b

    def test_round_changes_stream(self, world):
        cfg = SimulatorConfig(seed=9)
        ids = world.train_image_ids()
        a = simulate_predictions(world, flat(world, 0.5), cfg, ids, 1)
        b = simulate_predictions(world, flat(world, 0.5), cfg, ids, 2)
        assert a != b

    def test_batching_invariance(self, world):
        cfg = SimulatorConfig(seed=9)
        ids = world.train_image_ids()
        whole = simulate_predictions(world, flat(world, 0.5), cfg, ids, 3)
        parts = []
        for image_id in ids:
            parts.extend(simulate_predictions(
                world, flat(world, 0.5), cfg, [image_id], 3).detections)
        assert list(whole.detections) == parts

    def test_degenerate_parameters_reproduce_hidden_gt(self, world):
        cfg = SimulatorConfig(p_min=1.0, p_max=1.0, sigma_max=0.0,
                              lambda_fp_max=0.0, lambda_fp_min=0.0, seed=1)
        preds = simulate_predictions(world, flat(world, 1.0), cfg,
                                     world.train_image_ids(), 1)
        expected = [(a.image_id, a.category_id, a.bbox)
                    for i in world.train_image_ids()
                    for a in world.complete_annotations(i)]
        got = [(d.image_id, d.category_id, d.bbox) for d in preds.detections]
        assert got == expected

    def test_zero_coverage_zero_pmin_gives_only_fps(self, world):
        cfg = SimulatorConfig(p_min=0.0, p_max=0.9, seed=2)
        preds = simulate_predictions(world, flat(world, 0.0), cfg,
                                     world.train_image_ids(), 1)
        hidden = {(a.image_id, a.category_id, a.bbox)
                  for i in world.train_image_ids()
                  for a in world.complete_annotations(i)}
        for det in preds.detections:
            assert (det.image_id, det.category_id, det.bbox) not in hidden

    def test_emission_rate_monte_carlo(self, world):
        # cov = 0.5 with defaults: emission probability 0.45 + 0.5*0.5 = 0.7
        cfg0 = SimulatorConfig(lambda_fp_max=0.0, lambda_fp_min=0.0)
        ids = world.train_image_ids()
        n_hidden = sum(len(world.complete_annotations(i)) for i in ids)
        emitted = 0
        for seed in range(1000):
            cfg = SimulatorConfig(lambda_fp_max=0.0, lambda_fp_min=0.0,
                                  seed=seed)
            emitted += len(simulate_predictions(world, flat(world, 0.5),
                                                cfg, ids, 1))
        rate = emitted / (1000 * n_hidden)
        expected = cfg0.p_min + 0.5 * (cfg0.p_max - cfg0.p_min)
        assert abs(rate - expected) < 0.03

    def test_monotone_tp_and_fp_counts(self, world):
        ids = world.train_image_ids()
        n_seeds = 500
        tp_low = tp_high = 0
        for seed in range(n_seeds):
            cfg = SimulatorConfig(lambda_fp_max=0.0, lambda_fp_min=0.0,
                                  seed=seed)
            tp_low += len(simulate_predictions(world, flat(world, 0.3),
                                               cfg, ids, 1))
            tp_high += len(simulate_predictions(world, flat(world, 0.6),
                                                cfg, ids, 1))
        assert tp_low <= tp_high * 1.02
        fp_low = fp_high = 0
        for seed in range(n_seeds):
            cfg = SimulatorConfig(p_min=0.0, p_max=0.0, seed=seed)
            fp_low += len(simulate_predictions(world, flat(world, 0.3),
                                               cfg, ids, 1))
            fp_high += len(simulate_predictions(world, flat(world, 0.6),
                                                cfg, ids, 1))
        assert fp_high <= fp_low * 1.02

    def test_mean_tp_confidence_increases_with_coverage(self, world):
        ids = world.train_image_ids()
        means = []
        for cov_value in (0.0, 0.25, 0.5, 0.75, 1.0):
            scores = []
            for seed in range(100):
                cfg = SimulatorConfig(lambda_fp_max=0.0, lambda_fp_min=0.0,
                                      p_min=1.0, p_max=1.0, seed=seed)
                scores.extend(d.score for d in simulate_predictions(
                    world, flat(world, cov_value), cfg, ids, 1).detections)
            means.append(float(np.mean(scores)))
        assert all(a < b for a, b in zip(means, means[1:]))

    def test_scores_in_unit_interval_and_boxes_in_bounds(self, world):
        cfg = SimulatorConfig(seed=3)
        preds = simulate_predictions(world, flat(world, 0.2), cfg,
                                     world.train_image_ids(), 1)
        for det in preds.detections:
            assert 0.0 <= det.score <= 1.0
            img = world.image_record(det.image_id)
            assert det.bbox.w >= 1.0 and det.bbox.h >= 1.0
            assert det.bbox.x >= 0 and det.bbox.y >= 0
            assert det.bbox.x + det.bbox.w <= img.width + 1e-9
            assert det.bbox.y + det.bbox.h <= img.height + 1e-9

    def test_missing_class_in_coverage_map(self, world):
        with pytest.raises(InvalidConfigError):
            simulate_predictions(world, {1: 0.5}, SimulatorConfig(),
                                 world.train_image_ids(), 1)


class TestWorldIo:
    def test_save_load_roundtrip(self, tmp_path, world):
        cfg = SimulatorConfig(seed=77, p_min=0.3)
        save_world(world, tmp_path / "w", cfg=cfg, generation={"seed": 123})
        loaded, loaded_cfg = load_world(tmp_path / "w")
        assert loaded == world
        assert loaded_cfg == cfg

    def test_config_validation(self):
        with pytest.raises(InvalidConfigError):
            SimulatorConfig(p_min=0.9, p_max=0.5)
        with pytest.raises(InvalidConfigError):
            SimulatorConfig(beta=1.5)
        with pytest.raises(InvalidConfigError):
            SimulatorConfig.from_json_dict({"nope": 1})
