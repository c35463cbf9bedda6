"""Seed-addressed Gaussian noise for the driving Wiener process.

Every replicate owns a private PCG64 stream whose seed is a 64-bit
avalanche mix of ``(master_seed, replicate_index)``; the stream therefore
does not depend on how replicates are scheduled across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import DyadicGrid

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# replicates are always processed in chunks of this size so that BLAS sees
# identical shapes whatever the thread count
CHUNK = 64


def mix64(z: int) -> int:
    """splitmix64 finalizer."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    replicate_index: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) <= _MASK:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if int(self.replicate_index) < 0:
            raise ValueError("replicate_index must be >= 0")

    def stream_seed(self) -> int:
        s = mix64(int(self.master_seed) ^ mix64(_GOLDEN * (int(self.replicate_index) + 1)))
        return mix64(s + _GOLDEN)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.stream_seed()))


@dataclass(frozen=True)
class NoisePath:
    """Increments of W over the cells of ``grid``; each is N(0, step)."""

    grid: DyadicGrid
    increments: np.ndarray = field(repr=False)

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.shape != (self.grid.cells,):
            raise ValueError(f"expected {self.grid.cells} increments, got shape {inc.shape}")
        if not np.all(np.isfinite(inc)):
            raise ValueError("noise increments must be finite")
        object.__setattr__(self, "increments", inc)

    def perturbed(self, h: np.ndarray, eps: float) -> "NoisePath":
        """Noise shifted by ``eps * integral of h`` over each cell (Cameron-Martin direction)."""
        return NoisePath(self.grid, self.increments + eps * np.asarray(h, float) * self.grid.step)


def sample_noise(seed: SeedSpec, g: DyadicGrid) -> NoisePath:
    z = seed.generator().standard_normal(g.cells)
    return NoisePath(g, z * math.sqrt(g.step))


def noise_batch(master_seed: int, indices: Sequence[int], g: DyadicGrid) -> np.ndarray:
    """Noise of several replicates stacked as an array of shape ``(len(indices), cells)``."""
    out = np.empty((len(indices), g.cells))
    for row, r in enumerate(indices):
        out[row] = sample_noise(SeedSpec(master_seed, r), g).increments
    return out


def wiener_integral(h, w: NoisePath) -> float:
    """Sum of ``h(m_i) dW_i`` with ``h`` sampled at the cell midpoints."""
    h = np.asarray(h, dtype=float)
    if h.shape != w.increments.shape:
        raise ValueError(f"integrand has shape {h.shape}, noise has {w.increments.shape}")
    return float(h @ w.increments)


def mc_mean(values) -> tuple[float, float]:
    """Mean and standard error with compensated summation.

    The standard error is ``nan`` for fewer than two values.
    """
    v = np.asarray(values, dtype=float).ravel()
    n = v.size
    if n == 0:
        raise ValueError("no values")
    mean = math.fsum(v) / n
    if n < 2:
        return mean, float("nan")
    var = math.fsum((v - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def map_replicates(
    fn: Callable[[np.ndarray], np.ndarray],
    replicates: int,
    threads: int = 1,
    start: int = 0,
) -> np.ndarray:
    """Apply ``fn`` to fixed-size chunks of replicate indices and stack the results.

    ``fn`` receives an index array and returns one row (or scalar) per index.
    Chunk boundaries never depend on ``threads``, so the output is identical
    for every thread count.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    chunks = [np.arange(s, min(s + CHUNK, start + replicates)) for s in range(start, start + replicates, CHUNK)]
    if threads <= 1 or len(chunks) == 1:
        parts = [fn(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(fn, chunks))
    return np.concatenate([np.asarray(p) for p in parts], axis=0)
