"""
STF1 tensor files.

Layout: magic ``b"STF1"``, u8 element kind (0 = real32, 1 = complex64),
u8 rank, ``rank`` little-endian u32 extents, then the raw little-endian
values in row-major order (complex values as interleaved real/imag pairs).
"""

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from src.tensor.tensor import Tensor
from src.utils.errors import ContractError

MAGIC = b"STF1"
KIND_REAL32 = 0
KIND_COMPLEX64 = 1

_DTYPES = {KIND_REAL32: np.dtype("<f4"), KIND_COMPLEX64: np.dtype("<c8")}

logger = logging.getLogger("stf1")

PathLike = Union[str, Path]


def encode(value: Union[Tensor, np.ndarray]) -> bytes:
    array = value.data if isinstance(value, Tensor) else np.asarray(value)
    kind = KIND_COMPLEX64 if np.iscomplexobj(array) else KIND_REAL32
    if array.ndim > 255:
        raise ContractError(f"STF1 supports rank <= 255, got {array.ndim}")
    header = MAGIC + struct.pack("<BB", kind, array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape)
    body = np.ascontiguousarray(array, dtype=_DTYPES[kind]).tobytes()
    return header + body


def decode(payload: bytes) -> np.ndarray:
    if payload[:4] != MAGIC:
        raise ContractError(f"not an STF1 payload (magic {payload[:4]!r})")
    if len(payload) < 6:
        raise ContractError("truncated STF1 header")
    kind, rank = struct.unpack_from("<BB", payload, 4)
    if kind not in _DTYPES:
        raise ContractError(f"unknown STF1 element kind {kind}")
    offset = 6 + 4 * rank
    if len(payload) < offset:
        raise ContractError("truncated STF1 extents")
    shape = struct.unpack_from(f"<{rank}I", payload, 6)
    dtype = _DTYPES[kind]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(payload) - offset != expected:
        raise ContractError(f"STF1 body holds {len(payload) - offset} bytes, shape {shape} needs {expected}")
    return np.frombuffer(payload, dtype=dtype, offset=offset).reshape(shape).astype(dtype.newbyteorder("="))


def save_tensor(path: PathLike, value: Union[Tensor, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(value))
    logger.debug(f"Wrote {path}")
    return path


def load_tensor(path: PathLike) -> np.ndarray:
    return decode(Path(path).read_bytes())
