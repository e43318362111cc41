# src/stainreg/synthgen/prng.py
"""
Portable pseudo-random streams.

A 64-bit linear congruential generator with Knuth's MMIX constants; each draw
advances the state and emits its high 32 bits. Streams are keyed by
(seed, stream_id) so independent jobs never share state, and the sequences are
fully specified here so other implementations can reproduce them.
"""

import math

import numpy as np

from stainreg.util import require

MULTIPLIER = 6364136223846793005
INCREMENT = 1442695040888963407
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1
TWO_32 = float(1 << 32)

_BLOCK = 1024


def _seed_state(seed: int, stream_id: int) -> int:
    require(seed >= 0, f"seed must be non-negative, got {seed}")
    require(stream_id >= 0, f"stream_id must be non-negative, got {stream_id}")
    mixed = (seed & MASK64) ^ ((stream_id * GOLDEN_GAMMA) & MASK64)
    return (mixed * MULTIPLIER + INCREMENT) & MASK64


def _jump(steps: int) -> tuple[int, int]:
    """(a, c) such that advancing the state `steps` times is state -> a * state + c."""
    a, c = 1, 0
    for _ in range(steps):
        a = (a * MULTIPLIER) & MASK64
        c = (c * MULTIPLIER + INCREMENT) & MASK64
    return a, c


_BLOCK_JUMP = _jump(_BLOCK)


class PrngStream:
    """One (seed, stream_id) stream. Not thread-safe; give each worker its own stream."""

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = seed
        self.stream_id = stream_id
        self.state = _seed_state(seed, stream_id)

    def next_u32(self) -> int:
        self.state = (self.state * MULTIPLIER + INCREMENT) & MASK64
        return self.state >> 32

    def uniform(self) -> float:
        """Uniform in [0, 1): output / 2^32."""
        return self.next_u32() / TWO_32

    def uniform_range(self, low: float, high: float) -> float:
        return low + (high - low) * self.uniform()

    def integer(self, n: int) -> int:
        """Uniform integer in [0, n): floor(uniform * n)."""
        return int(self.uniform() * n)

    def gaussian(self) -> float:
        """
        Standard normal via Box-Muller, consuming two draws:
        sqrt(-2 ln(1 - u1)) * cos(2 pi u2).
        """
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def sign(self) -> float:
        return 1.0 if self.uniform() < 0.5 else -1.0

    def raw_states(self, count: int) -> np.ndarray:
        """The next `count` states as uint64, advancing the stream; same sequence as repeated next_u32."""
        states = np.empty(count, dtype=np.uint64)
        head = min(count, _BLOCK)
        state = self.state
        for k in range(head):
            state = (state * MULTIPLIER + INCREMENT) & MASK64
            states[k] = state
        a, c = np.uint64(_BLOCK_JUMP[0]), np.uint64(_BLOCK_JUMP[1])
        for start in range(_BLOCK, count, _BLOCK):
            stop = min(start + _BLOCK, count)
            states[start:stop] = states[start - _BLOCK : stop - _BLOCK] * a + c
        if count:
            self.state = int(states[-1])
        return states

    def uniforms(self, count: int) -> np.ndarray:
        """Vector of `count` uniforms, identical to `count` calls of uniform()."""
        return (self.raw_states(count) >> np.uint64(32)).astype(np.float64) / TWO_32

    def gaussians(self, count: int) -> np.ndarray:
        """Vector of `count` normals built from the same draws as `count` calls of gaussian()."""
        draws = self.uniforms(2 * count).reshape(count, 2)
        return np.sqrt(-2.0 * np.log(1.0 - draws[:, 0])) * np.cos(2.0 * np.pi * draws[:, 1])


def prng_stream(seed: int, stream_id: int = 0) -> PrngStream:
    return PrngStream(seed, stream_id)


def parallel_uniforms(seed: int, stream_ids: np.ndarray, count: int) -> np.ndarray:
    """
    (len(stream_ids), count) uniforms; row r equals the first `count` draws of
    prng_stream(seed, stream_ids[r]). Streams advance together, one draw per step.
    """
    stream_ids = np.asarray(stream_ids, dtype=np.int64)
    states = np.array([_seed_state(seed, int(s)) for s in stream_ids], dtype=np.uint64)
    out = np.empty((len(stream_ids), count))
    a, c, shift = np.uint64(MULTIPLIER), np.uint64(INCREMENT), np.uint64(32)
    for k in range(count):
        states = states * a + c
        out[:, k] = (states >> shift).astype(np.float64) / TWO_32
    return out
