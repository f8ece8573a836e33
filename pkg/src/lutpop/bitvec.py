"""Fixed-length packed bit vectors and reproducible random generation.

Bit index 0 is the least significant position of the backing integer, so
slicing a field of k bits starting at offset p is ``(value >> p) & mask``.
All cross-module wiring uses these logical indices.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from numpy.random import Generator, Philox

__all__ = [
    "BitVector",
    "RngStream",
    "make_zero",
    "from_indices",
    "random_fixed_weight",
    "exact_weight",
    "bitwise_and",
]


class BitVector:
    """Immutable fixed-length bit vector backed by an arbitrary-size int."""

    __slots__ = ("_n", "_v")

    def __init__(self, length: int, value: int = 0):
        if length < 1:
            raise ValueError(f"bit vector length must be >= 1, got {length}")
        if value < 0:
            raise ValueError("bit pattern must be non-negative")
        if value >> length:
            raise ValueError(f"value has bits set beyond length {length}")
        self._n = length
        self._v = value

    @property
    def length(self) -> int:
        return self._n

    @property
    def value(self) -> int:
        """The packed bit pattern (bit i of the int is bit i of the vector)."""
        return self._v

    @classmethod
    def zeros(cls, n: int) -> "BitVector":
        return cls(n, 0)

    @classmethod
    def ones(cls, n: int) -> "BitVector":
        return cls(n, (1 << n) - 1)

    @classmethod
    def from_indices(cls, n: int, indices: Iterable[int]) -> "BitVector":
        v = 0
        for i in indices:
            if not 0 <= i < n:
                raise IndexError(f"bit index {i} out of range for length {n}")
            v |= 1 << i
        return cls(n, v)

    @classmethod
    def from_array(cls, bits: Sequence[int] | np.ndarray) -> "BitVector":
        arr = np.asarray(bits, dtype=np.uint8)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("expected a non-empty 1-D bit array")
        packed = np.packbits(arr != 0, bitorder="little")
        return cls(arr.size, int.from_bytes(packed.tobytes(), "little"))

    def to_array(self) -> np.ndarray:
        """Bits as a uint8 array of shape (length,)."""
        nbytes = (self._n + 7) // 8
        raw = np.frombuffer(self._v.to_bytes(nbytes, "little"), dtype=np.uint8)
        return np.unpackbits(raw, count=self._n, bitorder="little")

    def get(self, i: int) -> int:
        if not 0 <= i < self._n:
            raise IndexError(f"bit index {i} out of range for length {self._n}")
        return (self._v >> i) & 1

    def indices(self) -> list[int]:
        """Positions of the set bits, ascending."""
        out = []
        v = self._v
        while v:
            low = v & -v
            out.append(low.bit_length() - 1)
            v ^= low
        return out

    def field(self, offset: int, width: int) -> int:
        """Extract ``width`` bits starting at ``offset`` as an int."""
        return (self._v >> offset) & ((1 << width) - 1)

    def weight(self) -> int:
        return self._v.bit_count()

    def __and__(self, other: "BitVector") -> "BitVector":
        if self._n != other._n:
            raise ValueError(
                f"length mismatch: {self._n} vs {other._n}"
            )
        return BitVector(self._n, self._v & other._v)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitVector):
            return NotImplemented
        return self._n == other._n and self._v == other._v

    def __hash__(self) -> int:
        return hash((self._n, self._v))

    def __len__(self) -> int:
        return self._n

    def __repr__(self) -> str:
        if self._n <= 64:
            pattern = "".join(str(self.get(i)) for i in range(self._n))
            return f"BitVector({self._n}, 0b<{pattern}>)"
        return f"BitVector({self._n}, weight={self.weight()})"


class RngStream:
    """Counter-based random stream addressed by (seed, stream_id).

    Identical (seed, stream_id) pairs give identical sequences on any
    platform; distinct stream ids give statistically independent streams,
    so parallel trials stay reproducible regardless of scheduling.
    """

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id) & 0xFFFFFFFFFFFFFFFF
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._gen = Generator(Philox(key=key))

    @property
    def generator(self) -> Generator:
        return self._gen

    def substream(self, *ids: int) -> "RngStream":
        """Derive an independent stream from integer coordinates."""
        h = self.stream_id
        for x in ids:
            h = _mix64(h ^ _mix64(int(x) & 0xFFFFFFFFFFFFFFFF))
        return RngStream(self.seed, h)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def _mix64(x: int) -> int:
    """splitmix64 finalizer; a fixed, platform-independent 64-bit mix."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def make_zero(n: int) -> BitVector:
    """All-zero vector of length n (n >= 1)."""
    return BitVector.zeros(n)


def from_indices(n: int, indices: Iterable[int]) -> BitVector:
    """Vector with bits set at exactly the listed positions (duplicates ok)."""
    return BitVector.from_indices(n, indices)


def random_fixed_weight(n: int, w: int, rng: RngStream) -> BitVector:
    """Uniform draw over all C(n, w) vectors with exactly w set bits."""
    if not 0 <= w <= n:
        raise ValueError(f"weight {w} out of range for length {n}")
    if w == 0:
        return BitVector.zeros(n)
    pos = rng.generator.choice(n, size=w, replace=False)
    v = 0
    for p in pos:
        v |= 1 << int(p)
    return BitVector(n, v)


def exact_weight(v: BitVector) -> int:
    """Number of set bits (true population count)."""
    return v.weight()


def bitwise_and(a: BitVector, b: BitVector) -> BitVector:
    """Elementwise AND of two equal-length vectors."""
    return a & b
