"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"TTAK" | u16 version | u32 metadata length | metadata (UTF-8 JSON)
    | u32 record count | records... | u32 CRC-32 of everything before it

    record: u16 name length | name (UTF-8) | 3-byte dtype tag | u8 ndim | u32 × ndim shape
            | u64 byte length | raw little-endian values
"""
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exception import DataError
from .logger_config import get_logger

logger = get_logger()

MAGIC = b"TTAK"
VERSION = 1
DTYPE_TAGS = {b"f32": np.dtype("<f4"), b"f64": np.dtype("<f8"), b"i64": np.dtype("<i8")}


def _tag(array: np.ndarray) -> bytes:
    for tag, dtype in DTYPE_TAGS.items():
        if array.dtype.kind == dtype.kind and array.dtype.itemsize == dtype.itemsize:
            return tag
    raise DataError(f"checkpoint cannot store dtype {array.dtype}")


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.blob):
            raise DataError("checkpoint is truncated")
        chunk = self.blob[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


@dataclass
class Checkpoint:
    metadata: dict = field(default_factory=dict)
    tensors: dict = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        meta = json.dumps(self.metadata, sort_keys=True).encode()
        parts = [MAGIC, struct.pack("<HI", VERSION, len(meta)), meta, struct.pack("<I", len(self.tensors))]
        for name, array in self.tensors.items():
            array = np.asarray(array)
            tag = _tag(array)
            raw = np.ascontiguousarray(array, dtype=DTYPE_TAGS[tag]).tobytes()
            encoded = name.encode()
            parts.append(struct.pack("<H", len(encoded)))
            parts.append(encoded)
            parts.append(tag)
            parts.append(struct.pack(f"<B{array.ndim}I", array.ndim, *array.shape))
            parts.append(struct.pack("<Q", len(raw)))
            parts.append(raw)
        body = b"".join(parts)
        return body + struct.pack("<I", zlib.crc32(body))

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Checkpoint":
        if len(blob) < len(MAGIC) + 4 or blob[:len(MAGIC)] != MAGIC:
            raise DataError("not a checkpoint file (bad magic)")
        body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
        if zlib.crc32(body) != crc:
            raise DataError("checkpoint checksum mismatch")

        reader = _Reader(body)
        reader.take(len(MAGIC))
        version, meta_len = reader.unpack("<HI")
        if version != VERSION:
            raise DataError(f"unsupported checkpoint version {version} (expected {VERSION})")
        metadata = json.loads(reader.take(meta_len).decode())
        (count,) = reader.unpack("<I")
        tensors = {}
        for _ in range(count):
            (name_len,) = reader.unpack("<H")
            name = reader.take(name_len).decode()
            tag = reader.take(3)
            if tag not in DTYPE_TAGS:
                raise DataError(f"tensor {name}: unknown dtype tag {tag!r}")
            (ndim,) = reader.unpack("<B")
            shape = reader.unpack(f"<{ndim}I")
            (size,) = reader.unpack("<Q")
            dtype = DTYPE_TAGS[tag]
            if size != int(np.prod(shape, dtype=np.int64)) * dtype.itemsize:
                raise DataError(f"tensor {name}: {size} bytes do not match shape {shape}")
            tensors[name] = np.frombuffer(reader.take(size), dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
        if reader.offset != len(body):
            raise DataError("checkpoint has trailing bytes")
        return cls(metadata, tensors)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        logger.debug(f"saved checkpoint {path} ({len(self.tensors)} tensors)")
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        path = Path(path)
        try:
            blob = path.read_bytes()
        except OSError as e:
            raise DataError(f"cannot read checkpoint {path}: {e}") from None
        try:
            return cls.from_bytes(blob)
        except DataError as e:
            raise DataError(f"{path}: {e}") from None

    def require(self, name: str) -> np.ndarray:
        if name not in self.tensors:
            raise DataError(f"checkpoint has no tensor {name!r}")
        return self.tensors[name]
