"""Deterministic randomness utilities.

Three needs are served here, all built on 64-bit splitmix-style mixing so
results are reproducible across processes and platforms:

- ``fold64``: collapse a heterogeneous tag tuple (ints, strings, floats,
  bytes) into a single 64-bit key.  Used to derive sub-seeds such as
  "(master seed, purpose, seed index)" without any global RNG state.
- ``substream``: an independent ``numpy.random.Generator`` (Philox, a
  counter-based bit generator) keyed by a seed plus purpose tags.  Distinct
  tags give statistically independent streams; identical tags reproduce the
  stream bit for bit.
- ``keyed_normals``: per-row standard normals that are a pure function of a
  64-bit row key.  The same key always yields the same draws regardless of
  batch composition or call order; different keys give independent draws.
  This is what lets a structural mechanism consume stored exogenous bits
  deterministically (see ``scm``).

Floats participate in keys via their IEEE-754 bit patterns, so two values
are "the same" for keying purposes exactly when they are bitwise equal.
"""

from __future__ import annotations

import struct

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)
_FOLD_SEED = np.uint64(0x6A09E667F3BCC909)

_U64 = np.uint64
_MASK64 = (1 << 64) - 1

# Inverse of 2**53, used to map 53-bit integers to (0, 1].
_INV_2_53 = float(2.0**-53)


def _finalize(z: np.ndarray | np.uint64) -> np.ndarray | np.uint64:
    """Splitmix64 output function: a strong 64-bit avalanche mixer."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U64(30))) * _MIX_A
        z = (z ^ (z >> _U64(27))) * _MIX_B
        return z ^ (z >> _U64(31))


def _words(part: int | float | str | bytes) -> list[int]:
    """Encode one key part as a type-tagged list of 64-bit words."""
    if isinstance(part, bool):
        return [0x01, int(part)]
    if isinstance(part, (int, np.integer)):
        return [0x02, int(part) & _MASK64]
    if isinstance(part, (float, np.floating)):
        (bits,) = struct.unpack("<Q", struct.pack("<d", float(part)))
        return [0x03, bits]
    if isinstance(part, str):
        part = part.encode("utf-8")
        tag = 0x04
    elif isinstance(part, bytes):
        tag = 0x05
    else:
        raise TypeError(f"cannot fold part of type {type(part).__name__}")
    words = [tag, len(part)]
    for i in range(0, len(part), 8):
        chunk = part[i : i + 8]
        words.append(int.from_bytes(chunk, "little"))
    return words


def fold64(*parts: int | float | str | bytes) -> int:
    """Fold arbitrary tag parts into one 64-bit key (returned as python int)."""
    h = _FOLD_SEED
    with np.errstate(over="ignore"):
        for part in parts:
            for word in _words(part):
                h = _finalize((h + _GOLDEN) ^ _finalize(_U64(word)))
    return int(h)


def substream(seed: int, *tags: int | float | str | bytes) -> np.random.Generator:
    """Independent Generator keyed by (seed, tags); Philox counter-based."""
    entropy = [int(seed) & _MASK64, fold64(*tags) if tags else 0]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _uniform_open(bits: np.ndarray) -> np.ndarray:
    """Map uint64 words to floats in (0, 1] on a 2**53 grid."""
    return ((bits >> _U64(11)).astype(np.float64) + 1.0) * _INV_2_53


def keyed_normals(keys: np.ndarray, count: int) -> np.ndarray:
    """Standard normals, shape (len(keys), count), a pure function of each key.

    Each row is generated by a splitmix64 counter sequence seeded at that
    row's key, converted through a Box-Muller transform.  Rows with equal
    keys are identical; rows with different keys are independent.
    """
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    if keys.ndim != 1:
        raise ValueError("keys must be one-dimensional")
    if count < 0:
        raise ValueError("count must be nonnegative")
    n = keys.shape[0]
    if count == 0 or n == 0:
        return np.zeros((n, count))
    pairs = (count + 1) // 2
    with np.errstate(over="ignore"):
        counters = np.arange(1, 2 * pairs + 1, dtype=np.uint64) * _GOLDEN
        bits = _finalize(keys[:, None] + counters[None, :])
    u = _uniform_open(bits)
    u1, u2 = u[:, :pairs], u[:, pairs:]
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = (2.0 * np.pi) * u2
    out = np.empty((n, 2 * pairs))
    out[:, 0::2] = radius * np.cos(angle)
    out[:, 1::2] = radius * np.sin(angle)
    return out[:, :count]


def row_keys(values: np.ndarray, salt: int) -> np.ndarray:
    """Collapse each row's float64 bit patterns plus a salt into a 64-bit key."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("values must be two-dimensional")
    bits = values.view(np.uint64)
    h = np.full(values.shape[0], _U64(int(salt) & _MASK64))
    with np.errstate(over="ignore"):
        for j in range(bits.shape[1]):
            h = _finalize((h + _GOLDEN) ^ _finalize(bits[:, j]))
    return h
