"""Counter-based splitmix64 streams.

Every random draw in the package goes through :class:`Stream`. A stream is a
64-bit key; its ``i``-th output is the ``i``-th output of a splitmix64
generator whose state starts at the key. Child streams are derived by mixing
a label into the key, so draws for (step, view) pairs never depend on the
order in which they are requested.

Conventions (fixed, so results are reproducible bit-for-bit):

* uniform: ``(x >> 11) * 2**-53`` in ``[0, 1)``
* normal: Box-Muller on consecutive pairs ``(a, b)`` with ``u1 = 1 - uniform(a)``
  and ``u2 = uniform(b)``, emitting ``r*cos(2*pi*u2)`` then ``r*sin(2*pi*u2)``
* integers in ``[lo, hi]``: ``lo + floor(uniform * (hi - lo + 1))``
"""

from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15

_GAMMA = np.uint64(GAMMA)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def mix64(z: int) -> int:
    """splitmix64 finalizer on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _label_int(label: int | str) -> int:
    if isinstance(label, str):
        return zlib.crc32(label.encode("utf-8")) | (1 << 40)
    return int(label) & MASK64


class Stream:
    """A named, seekable splitmix64 stream."""

    __slots__ = ("key",)

    def __init__(self, key: int):
        self.key = int(key) & MASK64

    def __repr__(self) -> str:
        return f"Stream(0x{self.key:016x})"

    def child(self, *labels: int | str) -> "Stream":
        key = self.key
        for label in labels:
            key = mix64(key ^ mix64(_label_int(label) + GAMMA))
        return Stream(key)

    def raw(self, n: int, offset: int = 0) -> np.ndarray:
        """The first ``n`` 64-bit outputs (after skipping ``offset``)."""
        with np.errstate(over="ignore"):
            counters = np.arange(offset + 1, offset + n + 1, dtype=np.uint64)
            states = np.uint64(self.key) + counters * _GAMMA
            return _mix64_array(states)

    def uniform(self, n: int) -> np.ndarray:
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        m = (n + 1) // 2
        u = self.uniform(2 * m)
        u1 = 1.0 - u[0::2]
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(2 * m)
        out[0::2] = r * np.cos(2.0 * np.pi * u2)
        out[1::2] = r * np.sin(2.0 * np.pi * u2)
        return out[:n]

    def integers(self, lo: int, hi: int, n: int) -> np.ndarray:
        """Uniform integers on the closed range ``[lo, hi]``."""
        span = hi - lo + 1
        return lo + np.floor(self.uniform(n) * span).astype(np.int64)


def root_stream(seed: int) -> Stream:
    """Expand a user seed into the root stream of a run."""
    return Stream(mix64(int(seed) & MASK64))
