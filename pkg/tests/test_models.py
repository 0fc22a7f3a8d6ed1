import numpy as np
import pytest

from inrmask.dataset import gen_dataset, load_dataset
from inrmask.errors import DivergenceError, EmptyInputError, ShapeError
from inrmask.models import (
    ImagePair,
    OracleClassifier,
    ToyCnn,
    accuracy,
    gaussian_blur,
    gaussian_kernel1d,
    gaussian_kernel2d,
    oracle_forward,
    split_dataset,
    train_toy_cnn,
)
from inrmask.tensor import Tensor, gradcheck, take

from .helpers import planted_scene


def bright_dark(n=24, size=8, seed=0):
    rng = np.random.default_rng(seed)
    images = np.empty((n, 3, size, size), dtype=np.float32)
    labels = np.arange(n) % 2
    for i, label in enumerate(labels):
        base = 0.8 if label else 0.2
        images[i] = np.clip(base + rng.normal(0, 0.05, size=(3, size, size)), 0, 1)
    return images, labels


class TestGaussianBlur:
    def test_constant_image_unchanged(self):
        image = np.full((3, 16, 16), 0.4, dtype=np.float32)
        np.testing.assert_allclose(gaussian_blur(image, 0.05), image, atol=1e-6)

    def test_kernel_normalized(self):
        for sigma in (0.5, 1.0, 3.2):
            assert abs(gaussian_kernel1d(sigma).sum() - 1) <= 1e-6
            assert abs(gaussian_kernel2d(sigma).sum() - 1) <= 1e-6
        assert len(gaussian_kernel1d(1.0)) == 7

    def test_one_hot_peak_is_center_weight(self):
        image = np.zeros((1, 15, 15), dtype=np.float32)
        image[0, 7, 7] = 1.0
        # σ = 1 px on a 15-pixel side
        out = gaussian_blur(image, 1.0 / 15)
        assert out[0, 7, 7] == pytest.approx(gaussian_kernel2d(1.0)[3, 3], abs=1e-6)

    def test_commutes_with_channel_permutation(self, rng):
        image = rng.uniform(size=(3, 12, 12)).astype(np.float32)
        order = [2, 0, 1]
        np.testing.assert_allclose(gaussian_blur(image)[order], gaussian_blur(image[order]), atol=1e-6)

    def test_non_positive_sigma(self):
        with pytest.raises(ValueError):
            gaussian_blur(np.zeros((1, 8, 8)), 0.0)


class TestImagePair:
    def test_build_blur_and_black(self):
        image, _ = planted_scene()
        assert ImagePair.build(image, "blur").perturbed.shape == image.shape
        assert not ImagePair.build(image, "black").perturbed.any()
        with pytest.raises(ValueError):
            ImagePair.build(image, "noise")

    def test_validation(self):
        with pytest.raises(ShapeError):
            ImagePair(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))
        with pytest.raises(ValueError):
            ImagePair(np.full((1, 4, 4), 1.5), np.zeros((1, 4, 4)))


class TestOracle:
    def test_threshold_gives_even_odds(self):
        _, region = planted_scene()
        image = np.full((3, 16, 16), 0.5, dtype=np.float32)
        p = oracle_forward(OracleClassifier(region, steepness=20, threshold=0.5), image).data
        np.testing.assert_allclose(p, [0.5, 0.5], atol=1e-6)

    def test_saturates(self):
        _, region = planted_scene()
        image = np.zeros((3, 16, 16), dtype=np.float32)
        image[:, region] = 1.0
        p = oracle_forward(OracleClassifier(region, steepness=200, threshold=0.5), image).data
        assert p[1] > 1 - 1e-6

    def test_monotone_in_region_mean(self):
        _, region = planted_scene()
        clf = OracleClassifier(region, steepness=5)
        probs = []
        for level in np.linspace(0, 1, 11):
            image = np.zeros((3, 16, 16), dtype=np.float32)
            image[:, region] = level
            probs.append(clf.probabilities(image)[1])
        assert np.all(np.diff(probs) > 0)

    def test_gradient_support_is_region(self, rng):
        _, region = planted_scene()
        clf = OracleClassifier(region, steepness=5)
        grad = clf.input_gradient(rng.uniform(size=(3, 16, 16)).astype(np.float32), 1)
        support = np.any(grad != 0, axis=0)
        np.testing.assert_array_equal(support, region)

    def test_gradient_matches_finite_differences(self, rng):
        region = np.zeros((5, 5), dtype=bool)
        region[1:3, 2:4] = True
        clf = OracleClassifier(region, steepness=3)
        passed, _ = gradcheck(lambda x: take(clf.forward(x), 1), [rng.uniform(size=(1, 5, 5))], atol=1e-4)
        assert passed

    def test_calibrated_confidence(self):
        image, region = planted_scene()
        pair = ImagePair.build(image, "black")
        clf = OracleClassifier.calibrated(region, pair.original, pair.perturbed)
        assert clf.probabilities(pair.original)[1] == pytest.approx(0.95, abs=1e-4)
        assert clf.probabilities(pair.perturbed)[1] == pytest.approx(0.05, abs=1e-4)

    def test_two_regions_either_suffices(self):
        size = 16
        left = np.zeros((size, size), dtype=bool)
        left[4:8, 1:5] = True
        right = np.zeros((size, size), dtype=bool)
        right[8:12, 10:14] = True
        clf = OracleClassifier([left, right], steepness=20, threshold=0.5)
        only_left = np.zeros((3, size, size), dtype=np.float32)
        only_left[:, left] = 1.0
        only_right = np.zeros((3, size, size), dtype=np.float32)
        only_right[:, right] = 1.0
        assert clf.probabilities(only_left)[1] > 0.99
        assert clf.probabilities(only_right)[1] > 0.99
        assert clf.probabilities(np.zeros((3, size, size), dtype=np.float32))[1] < 0.01
        np.testing.assert_array_equal(clf.support, left | right)

    def test_empty_region(self):
        with pytest.raises(EmptyInputError):
            OracleClassifier(np.zeros((4, 4), dtype=bool))

    def test_probabilities_sum_to_one(self, rng):
        _, region = planted_scene()
        clf = OracleClassifier(region)
        for _ in range(5):
            assert abs(clf.probabilities(rng.uniform(size=(3, 16, 16)).astype(np.float32)).sum() - 1) <= 1e-6


class TestToyCnn:
    def test_shapes_and_probabilities(self, rng):
        model = ToyCnn(3, 4, seed=0)
        for size in (8, 11, 16):
            p = model.probabilities(rng.uniform(size=(3, size, size)).astype(np.float32))
            assert p.shape == (4,)
            assert abs(p.sum() - 1) <= 1e-6

    def test_wrong_channels(self):
        with pytest.raises(ShapeError):
            ToyCnn(3).forward(Tensor(np.zeros((1, 8, 8))))

    def test_bright_vs_dark_separable(self):
        images, labels = bright_dark()
        (train_x, train_y), (test_x, test_y) = split_dataset(images, labels, 0.25, seed=0)
        model = train_toy_cnn(train_x, train_y, epochs=25, seed=0, learning_rate=0.05, batch_size=6)
        assert accuracy(model, test_x, test_y) == 1.0

    def test_deterministic(self):
        images, labels = bright_dark(n=8)
        a = train_toy_cnn(images, labels, epochs=2, seed=3, batch_size=4)
        b = train_toy_cnn(images, labels, epochs=2, seed=3, batch_size=4)
        for key, value in a.state_dict().items():
            np.testing.assert_array_equal(value, b.state_dict()[key])

    def test_needs_two_classes(self):
        images, _ = bright_dark(n=4)
        with pytest.raises(EmptyInputError):
            train_toy_cnn(images, np.zeros(4, dtype=int), epochs=1)

    def test_divergence_reports_epoch(self):
        images, labels = bright_dark(n=4)
        with pytest.raises(DivergenceError) as info:
            train_toy_cnn(images, labels, epochs=2, seed=0, learning_rate=1e30, batch_size=2)
        assert info.value.epoch in (0, 1)
        assert "epoch" in str(info.value)

    def test_save_and_load(self, tmp_path, rng):
        model = ToyCnn(3, 2, seed=1)
        model.save(tmp_path / "toy.inrw")
        loaded = ToyCnn.load(tmp_path / "toy.inrw")
        image = rng.uniform(size=(3, 8, 8)).astype(np.float32)
        np.testing.assert_array_equal(model.probabilities(image), loaded.probabilities(image))

    def test_trained_and_loaded_weights_are_frozen(self, tmp_path):
        images, labels = bright_dark(n=8)
        model = train_toy_cnn(images, labels, epochs=1, seed=0, batch_size=4)
        assert all(not p.requires_grad and p.grad is None for p in model.parameters())
        loaded = ToyCnn.load(model.save(tmp_path / "toy.inrw"))
        assert all(not p.requires_grad for p in loaded.parameters())
        # input gradients still flow through frozen weights
        grad = loaded.input_gradient(images[0], 1)
        assert grad.shape == images[0].shape and np.any(grad != 0)
        assert loaded.conv1.grad is None

    def test_generated_dataset_accuracy(self, tmp_path):
        gen_dataset(tmp_path, class_count=3, size=64, scenes_per_class=20, seed=0)
        images, labels, _ = load_dataset(tmp_path)
        (train_x, train_y), (test_x, test_y) = split_dataset(images, labels, 0.25, seed=0)
        model = train_toy_cnn(train_x, train_y, epochs=30, seed=0, learning_rate=0.01, batch_size=16)
        assert accuracy(model, test_x, test_y) >= 0.95

    def test_split_is_stratified(self):
        labels = np.array([0] * 8 + [1] * 4)
        images = np.zeros((12, 1, 2, 2))
        (_, train_y), (_, test_y) = split_dataset(images, labels, 0.25, seed=0)
        assert sorted(test_y.tolist()) == [0, 0, 1]
        assert len(train_y) == 9
