import numpy as np
import pytest

from inrmask.errors import AreaRangeError, ShapeError
from inrmask.inr import (
    AreaParameter,
    CoordinateGrid,
    FourierEncoder,
    NetworkConfig,
    encode,
    forward_mask,
    init_weights,
)
from inrmask.tensor import Tensor, affine, gradcheck, mean, relu, sigmoid


class TestCoordinateGrid:
    def test_corners(self):
        grid = CoordinateGrid(4, 5)
        coords = grid.coords.reshape(4, 5, 2)
        np.testing.assert_array_equal(coords[0, 0], [0.0, 0.0])
        np.testing.assert_array_equal(coords[-1, -1], [1.0, 1.0])
        # (column, row) per pixel, row-major
        np.testing.assert_array_equal(coords[0, -1], [1.0, 0.0])
        np.testing.assert_array_equal(coords[-1, 0], [0.0, 1.0])
        assert len(grid) == 20 and grid.shape == (4, 5)

    def test_empty(self):
        with pytest.raises(ShapeError):
            CoordinateGrid(0, 3)


class TestAreaParameter:
    def test_scaling_round_trip(self):
        for raw in (0.025, 0.05, 0.1, 0.2, 0.13):
            area = AreaParameter(raw)
            back = AreaParameter.from_scaled(area.scaled)
            assert back.raw == pytest.approx(raw, abs=1e-12)
        assert AreaParameter(0.025).scaled == 0.0
        assert AreaParameter(0.2).scaled == pytest.approx(1.0)

    def test_out_of_range(self):
        with pytest.raises(AreaRangeError):
            AreaParameter(0.5)
        with pytest.raises(AreaRangeError):
            AreaParameter.from_scaled(1.5)


class TestFourierEncoder:
    def test_zero_input(self):
        enc = FourierEncoder()
        features = enc(np.zeros((1, 2)), 0.0).data
        assert features.shape == (1, 256)
        np.testing.assert_array_equal(features[0, :128], 0.0)
        np.testing.assert_array_equal(features[0, 128:], 1.0)

    def test_deterministic_per_seed(self):
        coords = CoordinateGrid(3, 3).coords
        a = FourierEncoder(seed=4)(coords, 0.3).data
        b = FourierEncoder(seed=4)(coords, 0.3).data
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(FourierEncoder(seed=5).matrix, FourierEncoder(seed=4).matrix)

    def test_matrix_is_read_only(self):
        with pytest.raises(ValueError):
            FourierEncoder().matrix[0, 0] = 1.0

    def test_bounded_features(self):
        grid = CoordinateGrid(6, 6)
        features = encode(FourierEncoder(), grid, AreaParameter(0.1)).data
        assert np.all(np.abs(features) <= 1.0)

    def test_axis_mode(self):
        enc = FourierEncoder(frequency_count=4, mode="axis")
        assert enc.component_count == 12 and enc.output_dim == 24
        np.testing.assert_array_equal(enc.matrix[:4, 0], [1, 2, 4, 8])

    def test_scaled_area_outside_unit_interval(self):
        with pytest.raises(AreaRangeError):
            FourierEncoder()(np.zeros((1, 2)), 1.2)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            FourierEncoder(mode="spiral")


class TestNetwork:
    def test_layer_chain(self):
        net = init_weights(0)
        shapes = [w.shape for w in net.weights]
        assert shapes[0] == (256, 256)
        assert shapes[1:-1] == [(256, 256)] * 4
        assert shapes[-1] == (256, 1)
        assert len(net.weights) == 6

    def test_zero_output_layer_gives_half(self, tiny_network):
        net = init_weights(0, tiny_network)
        net.weights[-1].data[:] = 0
        mask = forward_mask(net, CoordinateGrid(5, 4), AreaParameter(0.1)).data
        assert mask.shape == (5, 4)
        np.testing.assert_array_equal(mask, 0.5)

    def test_output_inside_unit_interval(self, tiny_network):
        net = init_weights(3, tiny_network)
        mask = forward_mask(net, CoordinateGrid(8, 8), AreaParameter(0.2)).data
        assert np.all((mask > 0) & (mask < 1))

    def test_same_seed_identical_weights(self, tiny_network):
        a, b = init_weights(7, tiny_network), init_weights(7, tiny_network)
        for wa, wb in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(wa.data, wb.data)
        c = init_weights(8, tiny_network)
        assert not np.array_equal(a.weights[0].data, c.weights[0].data)

    def test_he_initialization_variance(self):
        # pre-activation variance of a hidden layer on unit-variance input, averaged over initializations
        config = NetworkConfig(hidden_layers=2, hidden_width=64, component_count=32)
        rng = np.random.default_rng(0)
        ratios = []
        for seed in range(100):
            net = init_weights(seed, config)
            x = rng.normal(size=(256, 64)).astype(np.float32)
            pre = x @ net.weights[1].data
            ratios.append(pre.var() / (2.0 * x.var()))
        assert 0.5 <= np.mean(ratios) <= 2.0

    def test_pixel_order_does_not_matter(self, tiny_network):
        net = init_weights(1, tiny_network)
        grid = CoordinateGrid(6, 6)
        area = AreaParameter(0.1)
        full = net.forward(net.encoder(grid.coords, area.scaled)).data[:, 0]
        perm = np.random.default_rng(2).permutation(len(grid))
        shuffled = net.forward(net.encoder(grid.coords[perm], area.scaled)).data[:, 0]
        np.testing.assert_allclose(shuffled, full[perm], rtol=1e-5, atol=1e-6)

    def test_state_dict_round_trip(self, tiny_network):
        source, target = init_weights(2, tiny_network), init_weights(2, tiny_network)
        for w in target.weights:
            w.data = w.data * 0
        target.load_state_dict(source.state_dict())
        for a, b in zip(source.parameters(), target.parameters()):
            np.testing.assert_array_equal(a.data, b.data)

    def test_state_dict_rejects_other_encoder(self, tiny_network):
        with pytest.raises(ShapeError):
            init_weights(2, tiny_network).load_state_dict(init_weights(3, tiny_network).state_dict())

    def test_gradient_of_mean_mask(self):
        config = NetworkConfig(hidden_layers=1, hidden_width=4, component_count=3)
        net = init_weights(0, config)
        features = net.encoder(CoordinateGrid(3, 3).coords, 0.5).data.astype(np.float64)
        w0, b0 = net.weights[0].data, net.biases[0].data
        w1, b1 = net.weights[1].data, net.biases[1].data

        def mean_mask(w):
            hidden = relu(affine(Tensor(features), w, Tensor(b0, dtype=np.float64)))
            out = affine(hidden, Tensor(w1, dtype=np.float64), Tensor(b1, dtype=np.float64))
            return mean(sigmoid(out))

        passed, worst = gradcheck(mean_mask, [w0.astype(np.float64)], eps=1e-4)
        assert passed, worst
