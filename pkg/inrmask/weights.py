"""
Binary tensor container.

Layout (little-endian): magic ``INRW``, version u32, tensor count u32, then per
tensor a u16 name length, the UTF-8 name, a u8 rank, one u32 per extent and the
float32 payload.
"""
import logging
import struct
from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np

from .errors import BadMagicError, BadNameError, TruncatedPayloadError, VersionMismatchError, WeightFormatError

logger = logging.getLogger(__name__)

MAGIC = b"INRW"
VERSION = 1
_FLOAT = np.dtype("<f4")


def encode_weights(tensors: Mapping[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, array in tensors.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise WeightFormatError(f"Tensor name too long: {name[:32]}...")
        array = np.asarray(array)
        if array.ndim > 0xFF:
            raise WeightFormatError(f"Tensor '{name}' has too many axes ({array.ndim})")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype=_FLOAT).tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        end = self.offset + count
        if end > len(self.payload):
            raise TruncatedPayloadError(
                f"Truncated payload while reading {what}: need {count} bytes at offset {self.offset}, "
                f"file has {len(self.payload)}"
            )
        chunk = self.payload[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_weights(payload: bytes) -> Dict[str, np.ndarray]:
    reader = _Reader(payload)
    if len(payload) >= len(MAGIC) and payload[:len(MAGIC)] != MAGIC:
        raise BadMagicError(f"Bad magic {payload[:len(MAGIC)]!r}, expected {MAGIC!r}")
    reader.take(len(MAGIC), "magic")
    (version,) = reader.unpack("<I", "version")
    if version != VERSION:
        raise VersionMismatchError(f"Unsupported container version {version}, expected {VERSION}")
    (count,) = reader.unpack("<I", "tensor count")

    tensors: Dict[str, np.ndarray] = {}
    for index in range(count):
        (name_length,) = reader.unpack("<H", f"name length of tensor {index}")
        raw_name = reader.take(name_length, f"name of tensor {index}")
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError as e:
            raise BadNameError(f"Name of tensor {index} is not valid UTF-8: {raw_name[:32]!r}") from e
        (rank,) = reader.unpack("<B", f"rank of '{name}'")
        shape = reader.unpack(f"<{rank}I", f"extents of '{name}'") if rank else ()
        size = int(np.prod(shape)) if shape else 1
        raw = reader.take(size * _FLOAT.itemsize, f"payload of '{name}'")
        tensors[name] = np.frombuffer(raw, dtype=_FLOAT).reshape(shape).astype(np.float32)
    if reader.offset != len(payload):
        logger.warning("Ignoring %d trailing bytes in weight container", len(payload) - reader.offset)
    return tensors


def save_weights(path: Union[str, Path], tensors: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_weights(tensors))
    logger.debug("Wrote %d tensors to %s", len(tensors), path)
    return path


def load_weights(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    return decode_weights(Path(path).read_bytes())
