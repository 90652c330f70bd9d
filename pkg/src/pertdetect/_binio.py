"""Little-endian binary helpers shared by the artifact formats."""

import struct

import numpy as np


class FormatError(ValueError):
    """Raised when an artifact file is malformed (bad magic, truncation, bad values)."""


class Reader:
    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"{self.what}: truncated at byte {self.pos} (needed {n}, have {len(self.data) - self.pos})"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def magic(self, expected: bytes):
        got = self.take(len(expected))
        if got != expected:
            raise FormatError(f"{self.what}: bad magic {got!r}, expected {expected!r}")

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return self.take(1)[0]

    def f64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)

    def u32s(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype="<u4").astype(np.int64)

    def finish(self):
        if self.pos != len(self.data):
            raise FormatError(f"{self.what}: {len(self.data) - self.pos} trailing bytes")


def u32(v: int) -> bytes:
    return struct.pack("<I", int(v))


def f64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def read_file(path, what: str) -> Reader:
    with open(path, "rb") as fh:
        return Reader(fh.read(), what)
