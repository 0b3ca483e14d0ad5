"""Seeded, counter-based random streams shared by every sampler in the package.

The generator is splitmix64 used in counter mode, so the i-th draw of a
stream is a pure function of (seed, i) and any contiguous block of draws
can be produced without stepping through its predecessors.  The exact
algorithm, so that any implementation can reproduce the streams bit for
bit:

  output(seed, i) = mix64(seed + i * 0x9E3779B97F4A7C15)   (uint64, wrapping)

  mix64(z):
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9   (wrapping)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB   (wrapping)
    return z ^ (z >> 31)

with i starting at 1.  Uniform doubles in [0, 1) take the top 53 bits:
``(output >> 11) * 2^-53``.  Standard normals come from the Box-Muller
transform applied to consecutive uniform pairs (u1, u2) = (draw 2j,
draw 2j+1):

  r  = sqrt(-2 * log(1 - u1))         (1 - u1 is in (0, 1], so log is finite)
  z0 = r * cos(2 * pi * u2)
  z1 = r * sin(2 * pi * u2)

A request for n normals consumes ceil(n / 2) pairs and returns the first
n values of (z0_0, z1_0, z0_1, z1_1, ...).

Independent streams are carved out of the same generator by deriving new
seeds: ``derive_seed(seed, *tags)`` folds each tag (a uint64 or an ASCII
string hashed with the same mix64 over its FNV-1a 64-bit digest) into the
state with one mix64 round per tag.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = (1 << 64) - 1

_INV_2_53 = 1.0 / (1 << 53)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _mix64_scalar(z: int) -> int:
    z &= _U64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
    return (z ^ (z >> 31)) & _U64


def _fnv1a(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("ascii"):
        h = ((h ^ byte) * 0x100000001B3) & _U64
    return h


def derive_seed(seed: int, *tags: int | str) -> int:
    """Deterministically derive a sub-stream seed from a root seed and tags."""
    state = _mix64_scalar(seed)
    for tag in tags:
        value = _fnv1a(tag) if isinstance(tag, str) else tag & _U64
        state = _mix64_scalar(state ^ _mix64_scalar(value))
    return state


def uniforms(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """n uniform doubles in [0, 1), draws offset+1 .. offset+n of the stream."""
    if n < 0:
        raise ValueError("n must be >= 0")
    idx = np.arange(offset + 1, offset + n + 1, dtype=np.uint64)
    bits = _mix64(np.uint64(seed & _U64) + idx * _GOLDEN)
    return (bits >> np.uint64(11)).astype(np.float64) * _INV_2_53


def normals(seed: int, n: int, offset_pairs: int = 0) -> np.ndarray:
    """n standard normal doubles via Box-Muller on the uniform stream."""
    if n < 0:
        raise ValueError("n must be >= 0")
    pairs = (n + 1) // 2
    u = uniforms(seed, 2 * pairs, offset=2 * offset_pairs)
    u1, u2 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log1p(-u1))
    theta = (2.0 * np.pi) * u2
    out = np.empty(2 * pairs, dtype=np.float64)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:n]
