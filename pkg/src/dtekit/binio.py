"""Little-endian binary I/O for on-disk artifacts.

Every artifact starts with a 4-byte ASCII magic and a u32 version so that
consumers can reject foreign or stale files with a clear error.
"""

import struct

import numpy as np

from .errors import FormatError


def write_header(f, magic: bytes, version: int) -> None:
    assert len(magic) == 4
    f.write(magic)
    f.write(struct.pack("<I", version))


def read_header(f, magic: bytes, version: int) -> None:
    got = f.read(4)
    if got != magic:
        raise FormatError(
            f"bad magic {got!r}, expected {magic!r}; not a {magic.decode()} file"
        )
    (got_version,) = struct.unpack("<I", f.read(4))
    if got_version != version:
        raise FormatError(
            f"unsupported {magic.decode()} version {got_version}, expected {version}"
        )


def write_u16(f, value: int) -> None:
    f.write(struct.pack("<H", value))


def write_u32(f, value: int) -> None:
    f.write(struct.pack("<I", value))


def write_u64(f, value: int) -> None:
    f.write(struct.pack("<Q", value))


def write_f32(f, value: float) -> None:
    f.write(struct.pack("<f", value))


def read_u16(f) -> int:
    return struct.unpack("<H", f.read(2))[0]


def read_u32(f) -> int:
    return struct.unpack("<I", f.read(4))[0]


def read_u64(f) -> int:
    return struct.unpack("<Q", f.read(8))[0]


def read_f32(f) -> float:
    return struct.unpack("<f", f.read(4))[0]


def write_str(f, s: str) -> None:
    raw = s.encode("utf-8")
    write_u32(f, len(raw))
    f.write(raw)


def read_str(f) -> str:
    n = read_u32(f)
    return f.read(n).decode("utf-8")


def write_array(f, arr, dtype="<f4") -> None:
    """Write raw array bytes (no shape; callers record dims explicitly)."""
    f.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def read_array(f, shape, dtype="<f4"):
    n = int(np.prod(shape)) if shape else 1
    itemsize = np.dtype(dtype).itemsize
    raw = f.read(n * itemsize)
    if len(raw) != n * itemsize:
        raise FormatError("truncated array data")
    return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
