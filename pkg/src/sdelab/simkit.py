"""Deterministic randomness and ensemble execution.

Every Gaussian draw is a pure function of (master_seed, path_index, channel,
counter). Channels keep the driving noises of a coupled pair and the estimator
randomness on disjoint streams. Generation is counter-based underneath
(numpy Philox), so replaying any path or chunk is exact regardless of worker
count or batching.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CHANNELS",
    "NoiseStream",
    "StreamPool",
    "PairStreams",
    "gaussian_increment",
    "run_ensemble",
]

# Fixed salts decorrelate channels sharing a master seed.
CHANNELS = {
    "Wbar": 0x9E3779B97F4A7C15,
    "Wtilde": 0xC2B2AE3D27D4EB4F,
    "Single": 0x165667B19E3779F9,
    "Slicing": 0x27D4EB2F165667C5,
}

_MASK64 = (1 << 64) - 1


def _make_generator(master_seed: int, path_index: int, channel: str) -> np.random.Generator:
    if channel not in CHANNELS:
        raise ValueError(f"unknown noise channel {channel!r}; expected one of {sorted(CHANNELS)}")
    # build the key as uint64 explicitly: a plain int list would be routed
    # through float64 and lose the low key bits
    key = np.array([(int(master_seed) ^ CHANNELS[channel]) & _MASK64,
                    int(path_index) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class NoiseStream:
    """A single path's Gaussian stream on one channel.

    counter counts standard-normal draws consumed; constructing a stream with a
    nonzero counter fast-forwards to that position, so (seed, index, channel,
    counter) fully determines the next draw.
    """

    master_seed: int
    path_index: int
    channel: str = "Single"
    counter: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self._gen = _make_generator(self.master_seed, self.path_index, self.channel)
        if self.counter < 0:
            raise ValueError("counter must be nonnegative")
        if self.counter:
            self._gen.standard_normal(self.counter)

    def normals(self, n: int) -> np.ndarray:
        out = self._gen.standard_normal(int(n))
        self.counter += int(n)
        return out


def gaussian_increment(stream: NoiseStream, dim: int, h: float) -> np.ndarray:
    """One Brownian increment over a window of length h: dim iid N(0, h) entries."""
    if h <= 0:
        raise ValueError("window length h must be positive")
    return np.sqrt(h) * stream.normals(dim)


class StreamPool:
    """Block-buffered per-path streams for the contiguous path range [lo, hi).

    block(n_steps) returns standard normals of shape (hi-lo, n_steps, dim),
    path i drawing from the same sequence NoiseStream(seed, lo+i, channel)
    would produce. Buffering amortizes per-path generator calls; numpy
    Generators give identical streams regardless of request batching.
    """

    def __init__(self, master_seed: int, channel: str, lo: int, hi: int, dim: int,
                 buffer_steps: int = 2048):
        if hi <= lo:
            raise ValueError("empty path range")
        self.master_seed = int(master_seed)
        self.channel = channel
        self.lo, self.hi = int(lo), int(hi)
        self.dim = int(dim)
        self.n_paths = self.hi - self.lo
        self._gens = [_make_generator(master_seed, i, channel) for i in range(self.lo, self.hi)]
        self._buf = np.empty((self.n_paths, 0))
        self._pos = 0
        self._buffer_values = max(1, int(buffer_steps)) * self.dim
        self.counter = 0  # values consumed per path

    def _refill(self, min_values: int):
        left = self._buf[:, self._pos:]
        n_new = max(self._buffer_values, min_values - left.shape[1])
        fresh = np.empty((self.n_paths, n_new))
        for i, g in enumerate(self._gens):
            fresh[i] = g.standard_normal(n_new)
        self._buf = np.concatenate([left, fresh], axis=1) if left.shape[1] else fresh
        self._pos = 0

    def values(self, n_values: int) -> np.ndarray:
        """(n_paths, n_values) standard normals, consumed in stream order."""
        if self._buf.shape[1] - self._pos < n_values:
            self._refill(n_values)
        out = self._buf[:, self._pos:self._pos + n_values]
        self._pos += n_values
        self.counter += n_values
        return out

    def block(self, n_steps: int) -> np.ndarray:
        """(n_paths, n_steps, dim) standard normals."""
        flat = self.values(int(n_steps) * self.dim)
        return flat.reshape(self.n_paths, int(n_steps), self.dim)


@dataclass
class PairStreams:
    """The two driving-noise pools of a batch of coupled pairs."""

    bar: StreamPool
    tilde: StreamPool

    @classmethod
    def create(cls, master_seed: int, lo: int, hi: int, dim: int) -> "PairStreams":
        return cls(
            bar=StreamPool(master_seed, "Wbar", lo, hi, dim),
            tilde=StreamPool(master_seed, "Wtilde", lo, hi, dim),
        )


# Fixed chunking (independent of worker count) keeps aggregation order and every
# path's stream identical for any parallelism level.
ENSEMBLE_CHUNK = 512


def run_ensemble(task, n_paths: int, workers: int = 1):
    """Run task(lo, hi) over [0, n_paths) in fixed chunks, possibly in parallel.

    task returns a dict whose ndarray values have leading axis hi-lo; chunks are
    concatenated in index order, so the result is identical for any workers.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    bounds = [(lo, min(lo + ENSEMBLE_CHUNK, n_paths)) for lo in range(0, n_paths, ENSEMBLE_CHUNK)]
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda b: task(*b), bounds))
    else:
        chunks = [task(lo, hi) for lo, hi in bounds]
    merged = {}
    for key in chunks[0]:
        vals = [c[key] for c in chunks]
        first = vals[0]
        if isinstance(first, np.ndarray) and first.ndim >= 1:
            merged[key] = np.concatenate(vals, axis=0)
        else:
            merged[key] = vals if len(vals) > 1 else first
    return merged
