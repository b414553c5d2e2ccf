"""Core quantities of the MMD gradient flow in quantile coordinates.

The driving functional on L2(0,1), discretized by the midpoint rule, is

    F(g) = (1/n) * sum_i [ (1 - 2 s_i) g_i + E|g_i - X| ],   X ~ target.

Its value at the quantile function of mu equals the squared MMD with the
negative distance kernel K(x,y) = -|x-y| shifted by the target's constant
self energy (exposed by :func:`kernel_self_energy`, so both conventions are
testable).  The subdifferential is the per-point interval
2*[cdf_left(g_i), cdf_right(g_i)] - 2 s_i; targets without atoms collapse it
to the single-valued gradient.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .grids import QuantileGrid, grid_norm, sample_quantile_grid
from .measures import Measure
from .quadrature import adaptive_simpson

__all__ = [
    "AtomicTargetError",
    "SubgradientSelection",
    "Target",
    "w2_distance",
    "mmd_squared",
    "kernel_self_energy",
    "functional_F",
    "subgradient",
    "gradient_continuous",
    "DensityEstimate",
    "density_and_atoms",
]


class AtomicTargetError(ValueError):
    """An operation requiring a continuous target CDF met an atomic target."""


class SubgradientSelection(enum.Enum):
    """Which element of the per-point subdifferential interval to pick."""

    MINIMAL = "minimal"
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True, eq=False)
class Target:
    """A flow target with its precomputed structural data.

    ``atom_x``/``atom_w``/``atom_cumw`` are set exactly when the measure is
    purely atomic (Discrete and its relatives), which is what the
    closed-form discrete solver consumes.  ``l_low_Q``/``lip_Q`` are the
    largest lower and smallest upper Lipschitz constants of the target
    quantile function (``lip_Q`` may be infinite).
    """

    measure: Measure
    hull: tuple[float, float]
    atom_x: np.ndarray | None
    atom_w: np.ndarray | None
    atom_cumw: np.ndarray | None
    l_low_Q: float
    lip_Q: float
    support_interval: bool
    jump_levels: np.ndarray

    @classmethod
    def for_measure(cls, m: Measure) -> "Target":
        dec = m.atom_decomposition()
        if dec is None:
            ax = aw = cw = None
        else:
            ax, aw = dec
            cw = np.concatenate([[0.0], np.cumsum(aw)])
            cw[-1] = 1.0
        l_low, lip = m.lipschitz_constants()
        return cls(
            measure=m,
            hull=m.support_hull(),
            atom_x=ax,
            atom_w=aw,
            atom_cumw=cw,
            l_low_Q=float(l_low),
            lip_Q=float(lip),
            support_interval=m.support_is_interval(),
            jump_levels=m.quantile_jump_levels(),
        )

    @property
    def has_atoms(self) -> bool:
        return self.measure.has_atoms

    @property
    def is_purely_atomic(self) -> bool:
        return self.atom_x is not None

    @cached_property
    def _grid_cache(self) -> dict:
        return {}

    def quantile_grid(self, n: int) -> QuantileGrid:
        grid = self._grid_cache.get(n)
        if grid is None:
            grid = sample_quantile_grid(self.measure, n)
            self._grid_cache[n] = grid
        return grid


def w2_distance(a: QuantileGrid, b: QuantileGrid) -> float:
    """Wasserstein-2 distance between the measures the two grids represent."""
    if a.n != b.n:
        raise ValueError(f"grid size mismatch: {a.n} vs {b.n}")
    return grid_norm(a.values - b.values)


def kernel_self_energy(m: Measure) -> float:
    """(1/2) * double integral of K(x,y) = -|x-y| against m x m."""
    return -0.5 * m.mean_abs_difference()


def mmd_squared(mu: Measure, nu: Measure, atol: float = 1e-10, max_depth: int = 40) -> float:
    """Squared MMD for K(x,y) = -|x-y|, as the integral of the squared CDF gap.

    The integration window clips where both CDFs are within 1e-13 of {0,1};
    the integrand is integrated piecewise between atom locations with
    one-sided endpoint limits, so jumps never stall the refinement.
    """
    eps = 1e-13
    lo = min(_window(mu, eps)[0], _window(nu, eps)[0])
    hi = max(_window(mu, eps)[1], _window(nu, eps)[1])
    if hi <= lo:
        return 0.0
    cuts = [lo, hi]
    for m in (mu, nu):
        cuts.extend(x for x in m.atom_locations().tolist() if lo < x < hi)
    cuts = np.unique(np.asarray(cuts, dtype=float))

    def gap_sq(x: float) -> float:
        d = float(mu.cdf_right(x)) - float(nu.cdf_right(x))
        return d * d

    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        da = float(mu.cdf_right(a)) - float(nu.cdf_right(a))
        db = float(mu.cdf_left(b)) - float(nu.cdf_left(b))
        total += adaptive_simpson(gap_sq, float(a), float(b), atol=atol,
                                  max_depth=max_depth, fa=da * da, fb=db * db)
    return total


def _window(m: Measure, eps: float) -> tuple[float, float]:
    lo, hi = m.support_hull()
    if not math.isfinite(lo):
        lo = float(m.quantile(eps))
    if not math.isfinite(hi):
        hi = float(m.quantile(1.0 - eps))
    return lo, hi


def functional_F(g: QuantileGrid, t: Target) -> float:
    """Midpoint-rule value of the driving functional at grid g.

    Equals mmd_squared(mu, target) - kernel_self_energy(target) up to
    discretization when g samples the quantile function of mu.
    """
    v = g.values
    pot = (1.0 - 2.0 * g.s) * v
    inter = t.measure.mean_abs_dev(v)
    return float(np.mean(pot + inter))


def subgradient(g: QuantileGrid, t: Target,
                selection: SubgradientSelection = SubgradientSelection.MINIMAL) -> np.ndarray:
    """A measurable selection of the subdifferential of F at g.

    Per point the subdifferential is the interval
    [2*cdf_left(g_i) - 2 s_i, 2*cdf_right(g_i) - 2 s_i]; ``MINIMAL`` picks
    the element of least absolute value (the steepest-descent direction),
    ``LEFT``/``RIGHT`` the endpoints.
    """
    v = g.values
    two_s = 2.0 * g.s
    lo = 2.0 * np.asarray(t.measure.cdf_left(v)) - two_s
    hi = 2.0 * np.asarray(t.measure.cdf_right(v)) - two_s
    if selection is SubgradientSelection.LEFT:
        return lo
    if selection is SubgradientSelection.RIGHT:
        return hi
    return np.where(lo > 0.0, lo, np.where(hi < 0.0, hi, 0.0))


def gradient_continuous(g: QuantileGrid, t: Target) -> np.ndarray:
    """The gradient 2*cdf(g_i) - 2 s_i, defined only for atomless targets."""
    if t.has_atoms:
        raise AtomicTargetError(
            "the functional is not differentiable against a target with atoms; "
            "use subgradient() instead")
    return 2.0 * np.asarray(t.measure.cdf_right(g.values)) - 2.0 * g.s


@dataclass(frozen=True)
class DensityEstimate:
    """Piecewise density segments and detected atoms of a grid's measure.

    ``segments`` rows are (x_lo, x_hi, density); ``atoms`` rows are
    (location, mass).  Total mass (integrated density plus atom masses)
    equals 1 up to O(1/n).
    """

    segments: np.ndarray
    atoms: np.ndarray

    def total_mass(self) -> float:
        seg = float(np.sum(self.segments[:, 2] * (self.segments[:, 1] - self.segments[:, 0]))) \
            if self.segments.size else 0.0
        at = float(np.sum(self.atoms[:, 1])) if self.atoms.size else 0.0
        return seg + at


def density_and_atoms(g: QuantileGrid, atol_scale: float = 1e-9) -> DensityEstimate:
    """Split the measure represented by g into a density part and atoms.

    A maximal run of >= 2 grid values equal within atol_scale*max(1,|value|)
    is an atom of mass run_length/n; between consecutive distinct values the
    density is the inverse difference quotient (1/n) / (value gap).
    """
    v = g.values
    n = g.n
    if not g.is_monotone():
        raise ValueError("density extraction requires a monotone grid")
    reps = []          # (value, count) for each run of equal values
    run_start = 0
    for i in range(1, n + 1):
        if i < n and abs(v[i] - v[i - 1]) <= atol_scale * max(1.0, abs(v[i - 1])):
            continue
        reps.append((float(np.mean(v[run_start:i])), i - run_start))
        run_start = i
    atoms = [(val, cnt / n) for val, cnt in reps if cnt >= 2]
    segments = []
    for (v0, _), (v1, _) in zip(reps[:-1], reps[1:]):
        width = v1 - v0
        if width > 0.0:
            segments.append((v0, v1, (1.0 / n) / width))
    seg_arr = np.asarray(segments, dtype=float).reshape(-1, 3)
    atom_arr = np.asarray(atoms, dtype=float).reshape(-1, 2)
    return DensityEstimate(seg_arr, atom_arr)
