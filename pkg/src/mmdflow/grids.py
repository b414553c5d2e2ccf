"""Quantile functions discretized on the midpoint grid of (0, 1).

The flow state is the vector of quantile values at s_i = (i + 1/2)/n.  The
grid inner product (1/n) * sum a_i b_i makes the embedding into L2(0,1)
isometric up to discretization, so Euclidean operations on grids are
Wasserstein-2 operations on measures.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .measures import Measure

__all__ = ["QuantileGrid", "midpoints", "sample_quantile_grid", "grid_norm", "grid_inner"]


def midpoints(n: int) -> np.ndarray:
    """The midpoint grid s_i = (i + 1/2)/n on (0, 1)."""
    if n < 2:
        raise ValueError("grid needs at least 2 points")
    return (np.arange(n) + 0.5) / n


@dataclass(frozen=True, eq=False)
class QuantileGrid:
    """Values of a (candidate) quantile function on the midpoint grid.

    Values are finite; membership in the cone of increasing functions is
    checked exactly by :meth:`is_monotone` rather than enforced at
    construction, because the explicit scheme can legitimately produce
    states that leave the cone.
    """

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.ndim != 1 or vals.size < 2:
            raise ValueError("grid values must be a 1-d array with at least 2 entries")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.size

    @cached_property
    def s(self) -> np.ndarray:
        grid = midpoints(self.n)
        grid.setflags(write=False)
        return grid

    def is_monotone(self) -> bool:
        """Exact cone membership: adjacent differences all >= 0."""
        return bool(np.all(np.diff(self.values) >= 0.0))

    def monotonicity_violations(self) -> int:
        return int(np.sum(np.diff(self.values) < 0.0))

    def support_range(self) -> tuple[float, float]:
        return float(self.values[0]), float(self.values[-1])


def sample_quantile_grid(m: Measure, n: int) -> QuantileGrid:
    """Quantile function of ``m`` sampled on the midpoint grid of size ``n``."""
    return QuantileGrid(np.asarray(m.quantile(midpoints(n)), dtype=float))


def grid_inner(a: np.ndarray, b: np.ndarray) -> float:
    """L2(0,1) inner product of two midpoint-grid functions."""
    if a.shape != b.shape:
        raise ValueError("grid size mismatch")
    return float(np.dot(a, b) / a.size)


def grid_norm(a: np.ndarray) -> float:
    return float(np.sqrt(np.dot(a, a) / a.size))
