import numpy as np
import pytest

from inrmask.errors import NetpbmError
from inrmask.netpbm import (
    load_binary_map,
    load_image,
    read_netpbm,
    save_image,
    to_bytes,
    write_pgm,
    write_ppm,
)


class TestReadWrite:
    def test_pgm_round_trip(self, tmp_path, rng):
        values = rng.integers(0, 256, size=(5, 7), dtype=np.uint8)
        path = write_pgm(tmp_path / "a.pgm", values)
        loaded, maxval = read_netpbm(path)
        assert maxval == 255
        np.testing.assert_array_equal(loaded, values)

    def test_ppm_round_trip(self, tmp_path, rng):
        values = rng.integers(0, 256, size=(4, 6, 3), dtype=np.uint8)
        loaded, _ = read_netpbm(write_ppm(tmp_path / "a.ppm", values))
        np.testing.assert_array_equal(loaded, values)

    def test_header_comments(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# made by hand\n2 # width\n1\n255\n" + bytes([10, 200]))
        values, _ = read_netpbm(path)
        np.testing.assert_array_equal(values, [[10, 200]])

    def test_sixteen_bit(self, tmp_path):
        path = tmp_path / "deep.pgm"
        path.write_bytes(b"P5 2 1 65535\n" + (1000).to_bytes(2, "big") + (65535).to_bytes(2, "big"))
        values, maxval = read_netpbm(path)
        assert maxval == 65535
        np.testing.assert_array_equal(values, [[1000, 65535]])
        np.testing.assert_allclose(load_image(path)[0, 0], [1000 / 65535, 1.0], rtol=1e-6)

    def test_truncated_raster(self, tmp_path):
        path = tmp_path / "short.pgm"
        path.write_bytes(b"P5\n4 4\n255\n" + bytes(10))
        with pytest.raises(NetpbmError):
            read_netpbm(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "head.pgm"
        path.write_bytes(b"P5\n4 ")
        with pytest.raises(NetpbmError):
            read_netpbm(path)

    def test_ascii_formats_rejected(self, tmp_path):
        path = tmp_path / "ascii.pgm"
        path.write_bytes(b"P2\n1 1\n255\n0\n")
        with pytest.raises(NetpbmError):
            read_netpbm(path)

    def test_wrong_shapes(self, tmp_path):
        with pytest.raises(NetpbmError):
            write_pgm(tmp_path / "x.pgm", np.zeros((2, 2, 3), dtype=np.uint8))
        with pytest.raises(NetpbmError):
            write_ppm(tmp_path / "x.ppm", np.zeros((2, 2), dtype=np.uint8))


class TestImages:
    def test_to_bytes_rounds_and_clips(self):
        np.testing.assert_array_equal(to_bytes(np.array([-0.5, 0.0, 0.5, 1.0, 2.0])), [0, 0, 128, 255, 255])

    def test_color_image_is_channels_first(self, tmp_path, rng):
        image = rng.uniform(size=(3, 6, 4)).astype(np.float32)
        path = save_image(tmp_path / "img.ppm", image)
        loaded = load_image(path)
        assert loaded.shape == (3, 6, 4) and loaded.dtype == np.float32
        np.testing.assert_allclose(loaded, image, atol=0.5 / 255 + 1e-6)

    def test_gray_image(self, tmp_path):
        image = np.linspace(0, 1, 12, dtype=np.float32).reshape(3, 4)
        loaded = load_image(save_image(tmp_path / "g.pgm", image))
        assert loaded.shape == (1, 3, 4)

    def test_binary_map(self, tmp_path):
        values = np.zeros((3, 3), dtype=np.uint8)
        values[1, 2] = 255
        mask = load_binary_map(write_pgm(tmp_path / "m.pgm", values))
        assert mask.dtype == bool and mask.sum() == 1 and mask[1, 2]

    def test_cannot_save_odd_channels(self, tmp_path):
        with pytest.raises(NetpbmError):
            save_image(tmp_path / "x.pgm", np.zeros((2, 3, 3)))
