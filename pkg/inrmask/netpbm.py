"""Binary PGM (P5) and PPM (P6) reading and writing."""
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from .errors import NetpbmError

PathLike = Union[str, Path]
_WHITESPACE = b" \t\r\n"


def _read_header(data: bytes) -> Tuple[bytes, int, int, int, int]:
    """Returns (magic, width, height, maxval, payload offset)."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos] in _WHITESPACE:
            pos += 1
        if pos >= len(data):
            raise NetpbmError("Unexpected end of file in header")
        if data[pos:pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(data) and data[pos] not in _WHITESPACE and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    pos += 1
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise NetpbmError(f"Unsupported format {magic!r}; only P5 and P6 are handled")
    try:
        width, height, maxval = (int(token) for token in tokens[1:])
    except ValueError:
        raise NetpbmError(f"Malformed header values {tokens[1:]!r}") from None
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise NetpbmError(f"Invalid header: {width}x{height}, maxval {maxval}")
    return magic, width, height, maxval, pos


def read_netpbm(path: PathLike) -> Tuple[np.ndarray, int]:
    """Read a P5/P6 file; returns (h×w or h×w×3 integer array, maxval)."""
    data = Path(path).read_bytes()
    magic, width, height, maxval, offset = _read_header(data)
    channels = 1 if magic == b"P5" else 3
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = width * height * channels * dtype.itemsize
    raster = data[offset:offset + expected]
    if len(raster) < expected:
        raise NetpbmError(f"{path}: raster truncated ({len(raster)} of {expected} bytes)")
    values = np.frombuffer(raster, dtype=dtype).astype(np.uint16 if maxval > 255 else np.uint8)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return values.reshape(shape), maxval


def _write(path: PathLike, magic: bytes, array: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    height, width = array.shape[:2]
    header = magic + f"\n{width} {height}\n255\n".encode("ascii")
    path.write_bytes(header + np.ascontiguousarray(array, dtype=np.uint8).tobytes())
    return path


def write_pgm(path: PathLike, array: np.ndarray) -> Path:
    array = np.asarray(array)
    if array.ndim != 2:
        raise NetpbmError(f"PGM needs an h×w array, got shape {array.shape}")
    return _write(path, b"P5", array)


def write_ppm(path: PathLike, array: np.ndarray) -> Path:
    array = np.asarray(array)
    if array.ndim != 3 or array.shape[2] != 3:
        raise NetpbmError(f"PPM needs an h×w×3 array, got shape {array.shape}")
    return _write(path, b"P6", array)


def to_bytes(values: np.ndarray) -> np.ndarray:
    """Map floats in [0,1] to 8-bit levels (×255, rounded)."""
    return np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def load_image(path: PathLike) -> np.ndarray:
    """Read a PPM/PGM as a channels-first float32 image in [0,1]."""
    values, maxval = read_netpbm(path)
    image = values.astype(np.float32) / np.float32(maxval)
    if image.ndim == 2:
        return image[None]
    return np.ascontiguousarray(image.transpose(2, 0, 1))


def save_image(path: PathLike, image: np.ndarray) -> Path:
    """Write a channels-first float image; one channel becomes PGM, three become PPM."""
    image = np.asarray(image)
    if image.ndim == 3 and image.shape[0] == 1:
        return write_pgm(path, to_bytes(image[0]))
    if image.ndim == 3 and image.shape[0] == 3:
        return write_ppm(path, to_bytes(image.transpose(1, 2, 0)))
    if image.ndim == 2:
        return write_pgm(path, to_bytes(image))
    raise NetpbmError(f"Cannot save image of shape {image.shape}")


def load_binary_map(path: PathLike) -> np.ndarray:
    """Read a PGM and return a boolean map of its nonzero pixels."""
    values, _ = read_netpbm(path)
    if values.ndim != 2:
        raise NetpbmError(f"{path}: expected a single-channel PGM")
    return values > 0
