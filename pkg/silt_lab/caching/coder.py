import json
import math
import struct
from dataclasses import dataclass
from typing import Any

import numpy as np

# magic, format version, dimension, horizon, box low, box high, number of float64 values
TABLE_MAGIC = b"SILT"
TABLE_VERSION = 1
TABLE_HEADER = struct.Struct("<4sHHIqqQ")


def object_hook(obj: Any) -> Any:
    _spec_type = obj.get("_spec_type")
    if not _spec_type:
        return obj

    if _spec_type == "ndarray":
        return np.asarray(obj["val"], dtype=obj["dtype"])
    raise TypeError(f"Unknown {_spec_type}")


class JsonEncoder(json.JSONEncoder):
    """JSON encoder aware of numpy scalars and arrays."""

    def default(self, o: Any) -> Any:
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.ndarray):
            return {"val": o.tolist(), "dtype": str(o.dtype), "_spec_type": "ndarray"}
        return super().default(o)


def finite_or_none(value: Any) -> Any:
    """Map NaN and infinities to None, numpy scalars to python scalars."""
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


class Coder:
    """
    Parent class for encoding and decoding operations.
    """

    @staticmethod
    def encode(data):
        raise NotImplementedError

    @staticmethod
    def decode(data):
        raise NotImplementedError


class JsonCoder(Coder):
    @classmethod
    def encode(cls, value: Any) -> bytes:
        return json.dumps(value, cls=JsonEncoder).encode()

    @classmethod
    def decode(cls, value: bytes) -> Any:
        # explicitly decode from UTF-8 bytes first, as otherwise
        # json.loads() will first have to detect the correct UTF-
        # encoding used.
        return json.loads(value.decode(), object_hook=object_hook)


@dataclass(frozen=True)
class TableBlob:
    """
    Flat probability table: `values` holds float64 entries of (horizon + 1) slices over the box [low, high]^dim,
    each slice in row-major order.
    """
    dim: int
    horizon: int
    low: int
    high: int
    values: np.ndarray

    @property
    def slice_shape(self) -> tuple[int, ...]:
        return (self.high - self.low + 1,) * self.dim

    def slices(self) -> np.ndarray:
        return self.values.reshape((self.horizon + 1,) + self.slice_shape)


class TableCoder(Coder):
    """Versioned little-endian binary format for TableBlob."""

    @classmethod
    def encode(cls, blob: TableBlob) -> bytes:
        values = np.ascontiguousarray(blob.values, dtype='<f8').ravel()
        header = TABLE_HEADER.pack(TABLE_MAGIC, TABLE_VERSION, blob.dim, blob.horizon, blob.low, blob.high,
                                   values.size)
        return header + values.tobytes()

    @classmethod
    def decode(cls, value: bytes) -> TableBlob:
        if len(value) < TABLE_HEADER.size:
            raise ValueError("table payload is shorter than its header")
        magic, version, dim, horizon, low, high, count = TABLE_HEADER.unpack_from(value)
        if magic != TABLE_MAGIC:
            raise ValueError(f"not a table payload (magic {magic!r})")
        if version != TABLE_VERSION:
            raise ValueError(f"unsupported table format version {version}")
        expected = (horizon + 1) * (high - low + 1) ** dim
        if count != expected or len(value) != TABLE_HEADER.size + 8 * count:
            raise ValueError(f"table payload holds {count} values, header implies {expected}")
        values = np.frombuffer(value, dtype='<f8', offset=TABLE_HEADER.size, count=count).astype(np.float64)
        return TableBlob(dim=dim, horizon=horizon, low=low, high=high, values=values)
