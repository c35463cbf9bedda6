"""Uniform dyadic time grids and alignment of partitions to grid nodes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_LEVEL = 24


@dataclass(frozen=True)
class DyadicGrid:
    """Uniform grid on ``[0, horizon]`` with ``2**level_max`` cells.

    Nodes are produced by index arithmetic ``T * i * 2**-n_max`` so that every
    coarser dyadic level is a bit-exact subset of the finest one.
    """

    horizon: float
    level_max: int
    nodes: np.ndarray = field(repr=False, compare=False)

    @property
    def cells(self) -> int:
        return 1 << self.level_max

    @property
    def step(self) -> float:
        return self.horizon / self.cells

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.cells) + 0.5) * self.step

    def level_nodes(self, n: int) -> np.ndarray:
        """Nodes ``t_i^n = T i 2^-n`` of dyadic level ``n``."""
        return self.nodes[:: self.level_stride(n)]

    def level_stride(self, n: int) -> int:
        if not 0 <= n <= self.level_max:
            raise ValueError(f"level {n} outside [0, {self.level_max}]")
        return 1 << (self.level_max - n)

    def node_index(self, t: float) -> int:
        """Index of the node equal to ``t``; raises if ``t`` is not a node."""
        i = int(round(t / self.horizon * self.cells))
        if i < 0 or i > self.cells or self.nodes[i] != t:
            raise ValueError(f"{t!r} is not a node of the grid")
        return i

    def same_as(self, other: "DyadicGrid") -> bool:
        return self.horizon == other.horizon and self.level_max == other.level_max


def make_dyadic_grid(T: float, n_max: int) -> DyadicGrid:
    if not np.isfinite(T) or T <= 0:
        raise ValueError(f"horizon T must be positive, got {T!r}")
    if int(n_max) != n_max or not 1 <= n_max <= MAX_LEVEL:
        raise ValueError(f"n_max must be an integer in [1, {MAX_LEVEL}], got {n_max!r}")
    n_max = int(n_max)
    nodes = float(T) * np.arange((1 << n_max) + 1) / float(1 << n_max)
    nodes[-1] = float(T)
    nodes.setflags(write=False)
    return DyadicGrid(float(T), n_max, nodes)


@dataclass(frozen=True)
class Partition:
    """Increasing points ``0 = s_0 <= ... <= s_m = T``."""

    points: tuple[float, ...]

    def __post_init__(self):
        pts = tuple(float(p) for p in self.points)
        if len(pts) < 2:
            raise ValueError("a partition needs at least two points")
        if any(b < a for a, b in zip(pts, pts[1:])):
            raise ValueError("partition points must be non-decreasing")
        object.__setattr__(self, "points", pts)

    @property
    def segments(self) -> int:
        return len(self.points) - 1

    def is_aligned(self, grid: DyadicGrid) -> bool:
        try:
            self.indices(grid)
        except ValueError:
            return False
        return self.points[0] == 0.0 and self.points[-1] == grid.horizon

    def indices(self, grid: DyadicGrid) -> list[int]:
        return [grid.node_index(p) for p in self.points]


def align_partition(p: Partition, g: DyadicGrid) -> Partition:
    """Snap every point of ``p`` to the nearest node of ``g``."""
    pts = np.asarray(p.points)
    if np.any(pts < 0) or np.any(pts > g.horizon):
        bad = pts[(pts < 0) | (pts > g.horizon)][0]
        raise ValueError(f"partition point {bad!r} outside [0, {g.horizon}]")
    idx = np.rint(pts / g.horizon * g.cells).astype(np.int64)
    # snapping is monotone, so order is preserved
    return Partition(tuple(g.nodes[idx]))
