import json
import logging

import numpy as np
import pytest

from inrmask.attribution import AttributionMask, Provenance
from inrmask.errors import EmptyInputError, ShapeError
from inrmask.evaluation import (
    ReferenceSegmentation,
    aggregate_seeds,
    corpus_summary,
    dice_matrix,
    hit_rate,
    iou,
    precision,
    soft_dice,
    threshold_saliency,
)


def box_mask(shape, box, value=1.0):
    mask = np.zeros(shape, dtype=np.float32)
    r0, c0, r1, c1 = box
    mask[r0:r1, c0:c1] = value
    return mask


class TestPrecision:
    def test_inside_and_outside(self):
        seg = ReferenceSegmentation.from_box((8, 8), (0, 0, 4, 8))
        assert precision(box_mask((8, 8), (0, 0, 2, 2)), seg) == 1.0
        assert precision(box_mask((8, 8), (6, 0, 8, 2)), seg) == 0.0
        assert precision(box_mask((8, 8), (3, 0, 5, 2)), seg) == 0.5

    def test_empty_mask_warns(self, caplog):
        seg = np.ones((4, 4), dtype=bool)
        with caplog.at_level(logging.WARNING, logger="inrmask.evaluation"):
            assert precision(np.zeros((4, 4)), seg) == 0.0
        assert "Empty mask" in caplog.text

    def test_binarization_threshold(self):
        seg = box_mask((2, 2), (0, 0, 1, 2)).astype(bool)
        mask = np.array([[0.6, 0.6], [0.4, 0.4]])
        assert precision(mask, seg) == 1.0
        assert precision(mask, seg, soft=True) == pytest.approx(0.6)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            precision(np.ones((2, 2)), np.ones((3, 3), dtype=bool))

    def test_segmentation_source(self):
        with pytest.raises(ValueError):
            ReferenceSegmentation(np.ones((2, 2)), "polygon")


class TestHitRate:
    def test_strictly_above(self):
        assert hit_rate([0.5, 0.51, 0.2, 1.0]) == 0.5

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            hit_rate([])


class TestOverlap:
    def test_soft_dice_bounds(self, rng):
        for _ in range(10):
            a, b = rng.uniform(size=(6, 6)), rng.uniform(size=(6, 6))
            assert 0.0 <= soft_dice(a, b) <= 1.0

    def test_soft_dice_half_overlap(self):
        m1 = np.array([[1.0, 1.0, 0.0, 0.0]])
        m2 = np.array([[0.0, 1.0, 1.0, 0.0]])
        assert soft_dice(m1, m2) == pytest.approx(0.5, abs=1e-6)

    def test_soft_dice_examples(self):
        mask = box_mask((4, 4), (0, 0, 2, 2))
        assert soft_dice(mask, mask) == pytest.approx(1.0)
        assert soft_dice(mask, 1 - mask) == pytest.approx(0.0, abs=1e-6)
        # both empty: ε/ε
        assert soft_dice(np.zeros((2, 2)), np.zeros((2, 2))) == pytest.approx(1.0)

    def test_dice_matrix(self):
        a = box_mask((4, 4), (0, 0, 2, 2))
        b = box_mask((4, 4), (2, 2, 4, 4))
        matrix = dice_matrix([a, b])
        assert matrix[0][0] == pytest.approx(1.0)
        assert matrix[0][1] == pytest.approx(0.0, abs=1e-6)
        assert matrix[0][1] == matrix[1][0]

    def test_iou(self):
        a = box_mask((4, 4), (0, 0, 2, 2))
        b = box_mask((4, 4), (0, 0, 2, 4))
        assert iou(a, b) == pytest.approx(0.5)
        assert iou(np.zeros((2, 2)), np.zeros((2, 2))) == 1.0


class TestSaliencyThreshold:
    def test_cutoff(self):
        saliency = np.array([[0.1, 0.4], [0.6, 0.9]])
        np.testing.assert_array_equal(threshold_saliency(saliency, 0.5), [[0, 0], [1, 1]])

    def test_rescales_out_of_range_maps(self):
        saliency = np.array([[0.0, 10.0], [40.0, 100.0]])
        np.testing.assert_array_equal(threshold_saliency(saliency, 0.3), [[0, 0], [1, 1]])

    def test_constant_maps(self, caplog):
        with caplog.at_level(logging.WARNING, logger="inrmask.evaluation"):
            np.testing.assert_array_equal(threshold_saliency(np.full((2, 2), 0.8), 0.5), np.ones((2, 2)))
            np.testing.assert_array_equal(threshold_saliency(np.full((2, 2), 7.0), 0.5), np.zeros((2, 2)))
        assert "Constant saliency map" in caplog.text

    def test_cutoff_range(self):
        with pytest.raises(ValueError):
            threshold_saliency(np.zeros((2, 2)), 1.0)


class TestAggregation:
    @pytest.fixture
    def seg(self):
        return ReferenceSegmentation.from_box((8, 8), (0, 0, 4, 4))

    def test_per_seed_precisions(self, seg):
        inside = box_mask((8, 8), (0, 0, 2, 2))
        outside = box_mask((8, 8), (6, 6, 8, 8))
        masks = [
            AttributionMask(inside, 0.05, Provenance("inr", 0)),
            AttributionMask(outside, 0.05, Provenance("inr", 1)),
            AttributionMask(inside, 0.05, Provenance("inr", 2)),
        ]
        record = aggregate_seeds(masks, seg, "img")
        assert record.seeds == [0, 1, 2]
        assert record.precisions == [1.0, 0.0, 1.0]
        assert record.mean_precision == pytest.approx(2 / 3)
        assert record.hit_rate == pytest.approx(2 / 3)
        assert record.hits == [True, False, True]
        assert record.max_precision is None and record.iteration_precisions == []

    def test_iterations(self, seg):
        inside = box_mask((8, 8), (0, 0, 2, 2))
        outside = box_mask((8, 8), (6, 6, 8, 8))
        masks = [
            AttributionMask(outside, 0.05, Provenance("inr", 0, 0)),
            AttributionMask(inside, 0.05, Provenance("inr", 0, 1)),
            AttributionMask(inside, 0.05, Provenance("inr", 1, 0)),
            AttributionMask(inside, 0.05, Provenance("inr", 1, 1)),
        ]
        record = aggregate_seeds(masks, seg, "img")
        assert record.precisions == [0.0, 1.0]
        assert record.iteration_precisions == [0.5, 1.0]
        assert record.max_precision == 1.0
        assert json.loads(record.to_json())["max_precision"] == 1.0

    def test_empty(self, seg):
        with pytest.raises(EmptyInputError):
            aggregate_seeds([], seg)

    def test_corpus_summary(self, seg):
        inside = AttributionMask(box_mask((8, 8), (0, 0, 2, 2)), 0.05)
        outside = AttributionMask(box_mask((8, 8), (6, 6, 8, 8)), 0.05, Provenance("inr", 1))
        records = [aggregate_seeds([inside], seg, "a"), aggregate_seeds([inside, outside], seg, "b")]
        summary = corpus_summary(records)
        assert summary["images"] == 2
        assert summary["mean_precision"] == pytest.approx(0.75)
        assert summary["hit_rate"] == pytest.approx(2 / 3)
        assert corpus_summary([])["images"] == 0


class TestElementwiseReference:
    """Metrics against plain loops over pixels on random small masks."""

    @staticmethod
    def loop_dice(m1, m2, eps=1e-6):
        overlap = total = 0.0
        for a, b in zip(m1.ravel().tolist(), m2.ravel().tolist()):
            overlap += a * b
            total += a + b
        return (2 * overlap + eps) / (total + eps)

    @staticmethod
    def loop_precision(mask, seg, threshold=0.5, soft=False):
        inside = kept = 0.0
        for value, hit in zip(mask.ravel().tolist(), seg.ravel().tolist()):
            weight = value if soft else float(value > threshold)
            kept += weight
            inside += weight if hit else 0.0
        return inside / kept if kept else 0.0

    def test_soft_dice(self, rng):
        for _ in range(100):
            shape = tuple(rng.integers(1, 6, size=2))
            m1, m2 = rng.uniform(size=shape), rng.uniform(size=shape)
            m2[rng.uniform(size=shape) < 0.3] = 0.0
            assert soft_dice(m1, m2) == pytest.approx(self.loop_dice(m1, m2), abs=1e-6)

    def test_precision(self, rng):
        for _ in range(100):
            shape = tuple(rng.integers(2, 7, size=2))
            mask = rng.uniform(size=shape)
            seg = rng.uniform(size=shape) < 0.4
            threshold = float(rng.choice([0.2, 0.5, 0.8]))
            expected = self.loop_precision(mask, seg, threshold)
            with_threshold = precision(mask, seg, binarize_threshold=threshold)
            assert with_threshold == pytest.approx(expected, abs=1e-6)
            assert precision(mask, seg, soft=True) == pytest.approx(self.loop_precision(mask, seg, soft=True), abs=1e-6)
