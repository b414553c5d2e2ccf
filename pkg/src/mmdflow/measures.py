"""One-dimensional probability measures with exact CDF/quantile machinery.

Every measure exposes the right-continuous CDF ``cdf_right``, its left limit
``cdf_left``, and the left-continuous minimal quantile function ``quantile``,
kept mutually consistent so that the Galois inequality

    quantile(s) <= x   iff   s <= cdf_right(x)

holds for all s in (0,1) and real x.  On top of that sit the closed-form
expected absolute deviations E|u - X| and mean absolute differences E|X - X'|
that the flow functional needs, plus the Lipschitz constants of the quantile
function used by the smoothing/invariance diagnostics.

Measures are also constructible from a small text syntax, e.g.
``gaussian(mean=5,std=1)``, ``discrete(x=[-1,0.5,2], w=[1/3,1/3,1/3])`` or
``mixture(0.5*gaussian(-10,1)+0.5*gaussian(10,1))``; see :func:`parse_measure`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import special
from scipy.optimize import minimize_scalar

from .quadrature import adaptive_simpson

__all__ = [
    "Measure",
    "Discrete",
    "Uniform",
    "Gaussian",
    "Laplace",
    "Exponential",
    "FoldedNormal",
    "Mixture",
    "Empirical",
    "GridQuantile",
    "MeasureParseError",
    "parse_measure",
]

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _norm_pdf(z):
    return np.exp(-0.5 * np.square(z)) / _SQRT_2PI


def _norm_cdf(z):
    # erfc form stays accurate deep in the lower tail.
    return 0.5 * special.erfc(-np.asarray(z, dtype=float) / _SQRT2)


def _norm_sf(z):
    return 0.5 * special.erfc(np.asarray(z, dtype=float) / _SQRT2)


# Acklam's rational approximation of the inverse standard normal CDF
# (relative error ~1.15e-9), sharpened by one Newton step on the erfc-based
# CDF, which lands at full double precision for all s representable in (0,1).
_ACK_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
          1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ACK_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
          6.680131188771972e+01, -1.328068155288572e+01)
_ACK_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
          -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ACK_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
          3.754408661907416e+00)


def _ndtri(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    x = np.empty_like(p)
    a, b, c, d = _ACK_A, _ACK_B, _ACK_C, _ACK_D
    p_low = 0.02425
    lo = p < p_low
    hi = p > 1.0 - p_low
    mid = ~(lo | hi)
    if lo.any():
        q = np.sqrt(-2.0 * np.log(p[lo]))
        x[lo] = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    if hi.any():
        q = np.sqrt(-2.0 * np.log1p(-p[hi]))
        x[hi] = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    if mid.any():
        q = p[mid] - 0.5
        r = q * q
        x[mid] = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    pdf = _norm_pdf(x)
    ok = pdf > 0.0  # skip the Newton update where the density underflows
    # For p > 1/2 the residual cdf(x) - p cancels catastrophically; solving
    # sf(x) = 1 - p instead keeps full relative accuracy (1 - p is exact).
    upper = p > 0.5
    step = np.where(upper, _norm_sf(x) - (1.0 - p), -(_norm_cdf(x) - p))
    x[ok] += step[ok] / pdf[ok]
    return x


def _split_scalar(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _ret(arr: np.ndarray, scalar: bool):
    return float(arr) if scalar else arr


def _invert_cdf(cdf, s, anchor: float, atol: float = 1e-12, max_iter: int = 200):
    """Smallest x with cdf(x) >= s, by doubling bracket then bisection."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    lo = np.full(s.shape, anchor - 1.0)
    hi = np.full(s.shape, anchor + 1.0)
    step = 1.0
    for _ in range(max_iter):
        need = cdf(lo) >= s
        if not need.any():
            break
        lo = np.where(need, lo - step, lo)
        step *= 2.0
    else:
        raise ArithmeticError("lower bracket expansion did not terminate")
    step = 1.0
    for _ in range(max_iter):
        need = cdf(hi) < s
        if not need.any():
            break
        hi = np.where(need, hi + step, hi)
        step *= 2.0
    else:
        raise ArithmeticError("upper bracket expansion did not terminate")
    for _ in range(max_iter):
        if np.max(hi - lo) <= atol:
            break
        mid = 0.5 * (lo + hi)
        ge = cdf(mid) >= s
        hi = np.where(ge, mid, hi)
        lo = np.where(ge, lo, mid)
    return hi


class Measure:
    """Base class; concrete measures are the frozen dataclasses below."""

    # -- core probability interface ------------------------------------

    def cdf_right(self, x):
        """Right-continuous CDF, the mass of (-inf, x]."""
        raise NotImplementedError

    def cdf_left(self, x):
        """Left limit of the CDF, the mass of (-inf, x)."""
        raise NotImplementedError

    def quantile(self, s):
        """Left-continuous minimal quantile, min{x : cdf_right(x) >= s}."""
        raise NotImplementedError

    def support_hull(self) -> tuple[float, float]:
        """Smallest closed interval containing the support (may be infinite)."""
        raise NotImplementedError

    @property
    def has_atoms(self) -> bool:
        raise NotImplementedError

    def _check_s(self, s):
        arr, scalar = _split_scalar(s)
        if arr.size and (np.any(arr <= 0.0) or np.any(arr >= 1.0)):
            raise ValueError("quantile argument must lie strictly inside (0, 1)")
        return arr, scalar

    # -- kernel energy helpers -----------------------------------------

    def mean_abs_dev(self, u):
        """E|u - X|; the fallback integrates the CDF identity numerically."""
        arr, scalar = _split_scalar(u)
        lo, hi = self._tail_window()
        out = np.empty(arr.shape)
        flat = arr.ravel()
        res = np.empty(flat.shape)
        for i, ui in enumerate(flat):
            a = min(lo, ui)
            b = max(hi, ui)
            below = adaptive_simpson(lambda x: float(self.cdf_right(x)), a, ui) if ui > a else 0.0
            above = adaptive_simpson(lambda x: 1.0 - float(self.cdf_right(x)), ui, b) if b > ui else 0.0
            res[i] = below + above
        out = res.reshape(arr.shape)
        return _ret(out, scalar)

    def mean_abs_difference(self) -> float:
        """E|X - X'| for independent copies; fallback is 2*integral F(1-F)."""
        lo, hi = self._tail_window()

        def f(x):
            c = float(self.cdf_right(x))
            return c * (1.0 - c)

        return 2.0 * adaptive_simpson(f, lo, hi)

    def _tail_window(self, eps: float = 1e-13) -> tuple[float, float]:
        lo, hi = self.support_hull()
        if not math.isfinite(lo):
            lo = float(self.quantile(eps))
        if not math.isfinite(hi):
            hi = float(self.quantile(1.0 - eps))
        return lo, hi

    # -- structure queries ----------------------------------------------

    def atom_decomposition(self):
        """(locations, weights) when the measure is purely atomic, else None."""
        return None

    def atom_locations(self) -> np.ndarray:
        """Sorted positions of all atoms (empty for continuous measures)."""
        return np.empty(0)

    def quantile_jump_levels(self) -> np.ndarray:
        """Levels s in (0,1) at which the quantile function jumps."""
        raise NotImplementedError

    def support_is_interval(self) -> bool:
        return self.quantile_jump_levels().size == 0

    def lipschitz_constants(self) -> tuple[float, float]:
        """(largest lower, smallest upper) Lipschitz constant of the quantile."""
        raise NotImplementedError


# ---------------------------------------------------------------------------
# atomic measures


@dataclass(frozen=True, eq=False)
class Discrete(Measure):
    """Finitely many atoms at strictly increasing locations."""

    x: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.x, dtype=float).copy()
        ws = np.asarray(self.w, dtype=float).copy()
        if xs.ndim != 1 or ws.shape != xs.shape or xs.size == 0:
            raise ValueError("atoms and weights must be matching 1-d arrays")
        if not np.all(np.isfinite(xs)) or not np.all(np.isfinite(ws)):
            raise ValueError("atoms and weights must be finite")
        if xs.size > 1 and not np.all(np.diff(xs) > 0.0):
            raise ValueError("atom locations must be strictly increasing")
        if np.any(ws <= 0.0):
            raise ValueError("atom weights must be positive")
        total = float(ws.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"atom weights sum to {total!r}, expected 1")
        ws /= total
        xs.setflags(write=False)
        ws.setflags(write=False)
        object.__setattr__(self, "x", xs)
        object.__setattr__(self, "w", ws)

    @classmethod
    def from_points(cls, points, weights=None) -> "Discrete":
        """Build from unsorted, possibly repeated points (weights merge)."""
        pts = np.asarray(points, dtype=float)
        if weights is None:
            wts = np.full(pts.shape, 1.0 / pts.size)
        else:
            wts = np.asarray(weights, dtype=float)
        order = np.argsort(pts, kind="stable")
        pts, wts = pts[order], wts[order]
        uniq, inverse = np.unique(pts, return_inverse=True)
        merged = np.zeros(uniq.shape)
        np.add.at(merged, inverse, wts)
        return cls(uniq, merged / merged.sum())

    @cached_property
    def _cumw(self) -> np.ndarray:
        cw = np.concatenate([[0.0], np.cumsum(self.w)])
        cw[-1] = 1.0
        cw.setflags(write=False)
        return cw

    def cdf_right(self, x):
        arr, scalar = _split_scalar(x)
        idx = np.searchsorted(self.x, arr, side="right")
        return _ret(self._cumw[idx], scalar)

    def cdf_left(self, x):
        arr, scalar = _split_scalar(x)
        idx = np.searchsorted(self.x, arr, side="left")
        return _ret(self._cumw[idx], scalar)

    def quantile(self, s):
        arr, scalar = self._check_s(s)
        idx = np.searchsorted(self._cumw[1:], arr, side="left")
        return _ret(self.x[idx], scalar)

    def support_hull(self):
        return float(self.x[0]), float(self.x[-1])

    @property
    def has_atoms(self):
        return True

    def mean_abs_dev(self, u):
        arr, scalar = _split_scalar(u)
        dev = np.abs(arr[..., None] - self.x) @ self.w
        return _ret(dev, scalar)

    def mean_abs_difference(self):
        gaps = np.abs(self.x[:, None] - self.x[None, :])
        return float(self.w @ gaps @ self.w)

    def atom_decomposition(self):
        return self.x, self.w

    def atom_locations(self):
        return self.x.copy()

    def quantile_jump_levels(self):
        return self._cumw[1:-1].copy()

    def lipschitz_constants(self):
        if self.x.size == 1:
            return 0.0, 0.0
        return 0.0, math.inf


@dataclass(frozen=True, eq=False)
class Empirical(Measure):
    """Uniform weights on a finite sample; Q(s) is the ceil(s*n)-th order statistic."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.sort(np.asarray(self.values, dtype=float))
        if vals.ndim != 1 or vals.size == 0 or not np.all(np.isfinite(vals)):
            raise ValueError("empirical sample must be a finite 1-d array")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @cached_property
    def _core(self) -> Discrete:
        return Discrete.from_points(self.values)

    def cdf_right(self, x):
        return self._core.cdf_right(x)

    def cdf_left(self, x):
        return self._core.cdf_left(x)

    def quantile(self, s):
        return self._core.quantile(s)

    def support_hull(self):
        return self._core.support_hull()

    @property
    def has_atoms(self):
        return True

    def mean_abs_dev(self, u):
        return self._core.mean_abs_dev(u)

    def mean_abs_difference(self):
        return self._core.mean_abs_difference()

    def atom_decomposition(self):
        return self._core.atom_decomposition()

    def atom_locations(self):
        return self._core.atom_locations()

    def quantile_jump_levels(self):
        return self._core.quantile_jump_levels()

    def lipschitz_constants(self):
        return self._core.lipschitz_constants()


class GridQuantile(Empirical):
    """A midpoint quantile grid reinterpreted as the measure it represents.

    The push-forward of Lebesgue measure on (0,1) under the piecewise
    constant grid interpolant: each grid value carries mass 1/n, runs of
    equal values merging into atoms.
    """

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.size and np.any(np.diff(vals) < 0.0):
            raise ValueError("grid values must be nondecreasing")
        super().__post_init__()


# ---------------------------------------------------------------------------
# continuous measures


class _ContinuousMeasure(Measure):
    """Shared behaviour for measures with a density (no atoms)."""

    @property
    def has_atoms(self):
        return False

    def cdf_left(self, x):
        return self.cdf_right(x)

    def pdf(self, x):
        raise NotImplementedError

    def quantile_jump_levels(self):
        return np.empty(0)

    def _density_candidates(self) -> np.ndarray:
        lo, hi = self._tail_window(1e-9)
        return np.linspace(lo, hi, 4097)

    def _max_density(self) -> float:
        cand = self._density_candidates()
        vals = np.asarray(self.pdf(cand))
        k = int(np.argmax(vals))
        best = float(vals[k])
        a = cand[max(k - 1, 0)]
        b = cand[min(k + 1, cand.size - 1)]
        if b > a:
            res = minimize_scalar(lambda t: -float(self.pdf(t)), bounds=(a, b),
                                  method="bounded", options={"xatol": 1e-11})
            best = max(best, float(-res.fun))
        return best

    def lipschitz_constants(self):
        l_low = 1.0 / self._max_density()
        lo, hi = self.support_hull()
        if not (math.isfinite(lo) and math.isfinite(hi)):
            return l_low, math.inf
        dens_min = self._min_density_on_hull()
        lip = math.inf if dens_min <= 0.0 else 1.0 / dens_min
        return l_low, lip

    def _min_density_on_hull(self) -> float:
        lo, hi = self.support_hull()
        cand = np.linspace(lo, hi, 4097)
        return float(np.min(self.pdf(cand)))


@dataclass(frozen=True, eq=False)
class Uniform(_ContinuousMeasure):
    a: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b) and self.a < self.b):
            raise ValueError("uniform requires finite bounds with a < b")

    def cdf_right(self, x):
        arr, scalar = _split_scalar(x)
        return _ret(np.clip((arr - self.a) / (self.b - self.a), 0.0, 1.0), scalar)

    def quantile(self, s):
        arr, scalar = self._check_s(s)
        return _ret(self.a + arr * (self.b - self.a), scalar)

    def support_hull(self):
        return self.a, self.b

    def pdf(self, x):
        arr, scalar = _split_scalar(x)
        inside = (arr >= self.a) & (arr <= self.b)
        return _ret(np.where(inside, 1.0 / (self.b - self.a), 0.0), scalar)

    def mean_abs_dev(self, u):
        arr, scalar = _split_scalar(u)
        mid = 0.5 * (self.a + self.b)
        inner = (np.square(arr - self.a) + np.square(self.b - arr)) / (2.0 * (self.b - self.a))
        out = np.where(arr < self.a, mid - arr, np.where(arr > self.b, arr - mid, inner))
        return _ret(out, scalar)

    def mean_abs_difference(self):
        return (self.b - self.a) / 3.0

    def lipschitz_constants(self):
        width = self.b - self.a
        return width, width


@dataclass(frozen=True, eq=False)
class Gaussian(_ContinuousMeasure):
    mean: float
    std: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.std) and self.std > 0.0):
            raise ValueError("gaussian requires finite mean and std > 0")

    def cdf_right(self, x):
        arr, scalar = _split_scalar(x)
        return _ret(_norm_cdf((arr - self.mean) / self.std), scalar)

    def quantile(self, s):
        arr, scalar = self._check_s(s)
        return _ret(self.mean + self.std * _ndtri(arr), scalar)

    def support_hull(self):
        return -math.inf, math.inf

    def pdf(self, x):
        arr, scalar = _split_scalar(x)
        return _ret(_norm_pdf((arr - self.mean) / self.std) / self.std, scalar)

    def mean_abs_dev(self, u):
        arr, scalar = _split_scalar(u)
        z = (arr - self.mean) / self.std
        out = self.std * (2.0 * _norm_pdf(z) + z * special.erf(z / _SQRT2))
        return _ret(out, scalar)

    def mean_abs_difference(self):
        return 2.0 * self.std / math.sqrt(math.pi)

    def lipschitz_constants(self):
        return self.std * _SQRT_2PI, math.inf


@dataclass(frozen=True, eq=False)
class Laplace(_ContinuousMeasure):
    loc: float
    scale: float

    def __post_init__(self):
        if not (math.isfinite(self.loc) and math.isfinite(self.scale) and self.scale > 0.0):
            raise ValueError("laplace requires finite loc and scale > 0")

    def cdf_right(self, x):
        arr, scalar = _split_scalar(x)
        z = (arr - self.loc) / self.scale
        out = np.where(z < 0.0, 0.5 * np.exp(np.minimum(z, 0.0)),
                       1.0 - 0.5 * np.exp(-np.maximum(z, 0.0)))
        return _ret(out, scalar)

    def quantile(self, s):
        arr, scalar = self._check_s(s)
        out = np.where(arr < 0.5,
                       self.loc + self.scale * np.log(2.0 * np.maximum(arr, 1e-320)),
                       self.loc - self.scale * np.log(2.0 * np.maximum(1.0 - arr, 1e-320)))
        return _ret(out, scalar)

    def support_hull(self):
        return -math.inf, math.inf

    def pdf(self, x):
        arr, scalar = _split_scalar(x)
        z = np.abs(arr - self.loc) / self.scale
        return _ret(np.exp(-z) / (2.0 * self.scale), scalar)

    def mean_abs_dev(self, u):
        arr, scalar = _split_scalar(u)
        z = np.abs(arr - self.loc)
        return _ret(z + self.scale * np.exp(-z / self.scale), scalar)

    def mean_abs_difference(self):
        return 1.5 * self.scale

    def lipschitz_constants(self):
        return 2.0 * self.scale, math.inf


@dataclass(frozen=True, eq=False)
class Exponential(_ContinuousMeasure):
    scale: float

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0.0):
            raise ValueError("exponential requires scale > 0")

    def cdf_right(self, x):
        arr, scalar = _split_scalar(x)
        out = np.where(arr <= 0.0, 0.0, -np.expm1(-np.maximum(arr, 0.0) / self.scale))
        return _ret(out, scalar)

    def quantile(self, s):
        arr, scalar = self._check_s(s)
        return _ret(-self.scale * np.log1p(-arr), scalar)

    def support_hull(self):
        return 0.0, math.inf

    def pdf(self, x):
        arr, scalar = _split_scalar(x)
        out = np.where(arr < 0.0, 0.0, np.exp(-np.maximum(arr, 0.0) / self.scale) / self.scale)
        return _ret(out, scalar)

    def mean_abs_dev(self, u):
        arr, scalar = _split_scalar(u)
        pos = arr - self.scale + 2.0 * self.scale * np.exp(-np.maximum(arr, 0.0) / self.scale)
        out = np.where(arr <= 0.0, self.scale - arr, pos)
        return _ret(out, scalar)

    def mean_abs_difference(self):
        return self.scale

    def lipschitz_constants(self):
        # quantile derivative scale/(1-s) grows without bound toward s=1
        return self.scale, math.inf


@dataclass(frozen=True, eq=False)
class FoldedNormal(_ContinuousMeasure):
    """|Z| for Z normal with the given location and unit scale."""

    loc: float

    def __post_init__(self):
        if not math.isfinite(self.loc):
            raise ValueError("folded normal requires a finite location")

    def cdf_right(self, x):
        arr, scalar = _split_scalar(x)
        xp = np.maximum(arr, 0.0)
        val = _norm_cdf(xp - self.loc) + _norm_cdf(xp + self.loc) - 1.0
        return _ret(np.where(arr < 0.0, 0.0, val), scalar)

    def quantile(self, s):
        arr, scalar = self._check_s(s)
        anchor = abs(self.loc) + 1.0
        out = _invert_cdf(self.cdf_right, arr, anchor)
        out = np.maximum(out, 0.0)
        return _ret(out.reshape(arr.shape), scalar)

    def support_hull(self):
        return 0.0, math.inf

    def pdf(self, x):
        arr, scalar = _split_scalar(x)
        xp = np.maximum(arr, 0.0)
        val = _norm_pdf(xp - self.loc) + _norm_pdf(xp + self.loc)
        return _ret(np.where(arr < 0.0, 0.0, val), scalar)

    @cached_property
    def _mean(self) -> float:
        m = self.loc
        return float(m * (2.0 * _norm_cdf(m) - 1.0) + 2.0 * _norm_pdf(m))

    def _partial_first_moment(self, u):
        """integral of x * pdf(x) over (0, u], u >= 0, via normal pieces."""
        total = np.zeros_like(u)
        for c in (self.loc, -self.loc):
            total = total + c * (_norm_cdf(u - c) - _norm_cdf(-c)) \
                - (_norm_pdf(u - c) - _norm_pdf(-c))
        return total

    def mean_abs_dev(self, u):
        arr, scalar = _split_scalar(u)
        up = np.maximum(arr, 0.0)
        pos = up * (2.0 * self.cdf_right(up) - 1.0) - 2.0 * self._partial_first_moment(up) + self._mean
        out = np.where(arr <= 0.0, self._mean - arr, pos)
        return _ret(out, scalar)

    def _density_candidates(self):
        lo, hi = self._tail_window(1e-9)
        base = np.linspace(lo, hi, 4097)
        extra = np.array([0.0, abs(self.loc)])
        return np.unique(np.concatenate([base, extra[(extra >= lo) & (extra <= hi)]]))


@dataclass(frozen=True, eq=False)
class Mixture(_ContinuousMeasure):
    """Convex combination of measures; components may themselves be atomic."""

    components: tuple
    weights: np.ndarray

    def __post_init__(self):
        comps = tuple(self.components)
        ws = np.asarray(self.weights, dtype=float).copy()
        if len(comps) == 0 or ws.shape != (len(comps),):
            raise ValueError("mixture needs matching components and weights")
        if not all(isinstance(c, Measure) for c in comps):
            raise ValueError("mixture components must be measures")
        if np.any(ws <= 0.0) or not np.all(np.isfinite(ws)):
            raise ValueError("mixture weights must be positive and finite")
        total = float(ws.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {total!r}, expected 1")
        ws /= total
        ws.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", ws)

    @property
    def has_atoms(self):
        return any(c.has_atoms for c in self.components)

    def cdf_right(self, x):
        arr, scalar = _split_scalar(x)
        out = sum(w * np.asarray(c.cdf_right(arr)) for c, w in zip(self.components, self.weights))
        return _ret(np.asarray(out), scalar)

    def cdf_left(self, x):
        arr, scalar = _split_scalar(x)
        out = sum(w * np.asarray(c.cdf_left(arr)) for c, w in zip(self.components, self.weights))
        return _ret(np.asarray(out), scalar)

    def quantile(self, s):
        arr, scalar = self._check_s(s)
        dec = self.atom_decomposition()
        if dec is not None:
            out = Discrete.from_points(dec[0], dec[1]).quantile(arr)
            return _ret(np.asarray(out), scalar)
        anchor = float(sum(w * c.quantile(0.5) for c, w in zip(self.components, self.weights)))
        out = _invert_cdf(self.cdf_right, arr, anchor)
        return _ret(out.reshape(arr.shape), scalar)

    def support_hull(self):
        hulls = [c.support_hull() for c in self.components]
        return min(h[0] for h in hulls), max(h[1] for h in hulls)

    def pdf(self, x):
        arr, scalar = _split_scalar(x)
        out = sum(w * np.asarray(c.pdf(arr)) for c, w in zip(self.components, self.weights))
        return _ret(np.asarray(out), scalar)

    def mean_abs_dev(self, u):
        arr, scalar = _split_scalar(u)
        out = sum(w * np.asarray(c.mean_abs_dev(arr)) for c, w in zip(self.components, self.weights))
        return _ret(np.asarray(out), scalar)

    def atom_decomposition(self):
        parts = [c.atom_decomposition() for c in self.components]
        if any(p is None for p in parts):
            return None
        xs = np.concatenate([p[0] for p in parts])
        ws = np.concatenate([w * p[1] for p, w in zip(parts, self.weights)])
        merged = Discrete.from_points(xs, ws)
        return merged.x, merged.w

    def atom_locations(self):
        pieces = [c.atom_locations() for c in self.components]
        return np.unique(np.concatenate(pieces)) if pieces else np.empty(0)

    def _breakpoints(self) -> np.ndarray:
        pts = []
        for c in self.components:
            lo, hi = c.support_hull()
            pts.extend(p for p in (lo, hi) if math.isfinite(p))
            dec = c.atom_decomposition()
            if dec is not None:
                pts.extend(dec[0].tolist())
        return np.unique(np.asarray(pts, dtype=float))

    def quantile_jump_levels(self):
        # The quantile jumps exactly across open intervals of zero mass.
        pts = self._breakpoints()
        levels = []
        for a, b in zip(pts[:-1], pts[1:]):
            if b > a and float(self.cdf_right(a)) == float(self.cdf_left(b)):
                lvl = float(self.cdf_right(a))
                if 0.0 < lvl < 1.0:
                    levels.append(lvl)
        return np.unique(np.asarray(levels, dtype=float))

    def lipschitz_constants(self):
        if self.has_atoms:
            dec = self.atom_decomposition()
            if dec is not None and dec[0].size == 1:
                return 0.0, 0.0
            return 0.0, math.inf
        return super().lipschitz_constants()

    def _density_candidates(self):
        lo, hi = self._tail_window(1e-9)
        pieces = [np.linspace(lo, hi, 4097)]
        for c in self.components:
            clo, chi = c._tail_window(1e-9)
            pieces.append(np.linspace(clo, chi, 513))
        cand = np.concatenate(pieces)
        return np.unique(cand)

    def _min_density_on_hull(self):
        lo, hi = self.support_hull()
        pts = self._breakpoints()
        pts = pts[(pts > lo) & (pts < hi)]
        edges = np.concatenate([[lo], pts, [hi]])
        mids = 0.5 * (edges[:-1] + edges[1:])
        cand = np.unique(np.concatenate([np.linspace(lo, hi, 4097), mids]))
        return float(np.min(self.pdf(cand)))


# ---------------------------------------------------------------------------
# text configuration syntax


class MeasureParseError(ValueError):
    """Malformed measure expression."""


_TOKEN_RE = re.compile(
    r"(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<sym>[()\[\],=*+/])"
    r"|(?P<ws>\s+)"
    r"|(?P<bad>.)"
)


def _tokenize(text: str):
    tokens = []
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        if kind == "ws":
            continue
        if kind == "bad":
            raise MeasureParseError(f"unexpected character {m.group()!r} at column {m.start() + 1}")
        tokens.append((kind, m.group(), m.start() + 1))
    tokens.append(("end", "", len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, sym: str):
        kind, value, col = self.advance()
        if kind != "sym" or value != sym:
            raise MeasureParseError(f"expected {sym!r} at column {col}, found {value or 'end of input'!r}")
        return value

    def fail(self, msg: str):
        _, value, col = self.peek()
        raise MeasureParseError(f"{msg} at column {col} (near {value or 'end of input'!r})")

    # grammar ----------------------------------------------------------

    def parse_measure(self) -> Measure:
        m = self.parse_sum()
        kind, value, col = self.peek()
        if kind != "end":
            raise MeasureParseError(f"trailing input at column {col}: {value!r}")
        return m

    def parse_sum(self) -> Measure:
        terms = [self.parse_term()]
        while self.peek()[:2] == ("sym", "+"):
            self.advance()
            terms.append(self.parse_term())
        if len(terms) == 1 and terms[0][0] is None:
            return terms[0][1]
        if any(w is None for w, _ in terms):
            self.fail("every mixture term needs an explicit weight like 0.5*gaussian(...)")
        weights = np.array([w for w, _ in terms])
        comps = tuple(m for _, m in terms)
        try:
            return Mixture(comps, weights)
        except ValueError as exc:
            raise MeasureParseError(str(exc)) from exc

    def parse_term(self):
        if self.peek()[0] == "num":
            w = self.parse_number()
            self.expect("*")
            return w, self.parse_call()
        return None, self.parse_call()

    def parse_number(self) -> float:
        kind, value, col = self.advance()
        if kind != "num":
            raise MeasureParseError(f"expected a number at column {col}, found {value!r}")
        num = float(value)
        if self.peek()[:2] == ("sym", "/"):
            self.advance()
            kind, value, col = self.advance()
            if kind != "num":
                raise MeasureParseError(f"expected a denominator at column {col}")
            den = float(value)
            if den == 0.0:
                raise MeasureParseError(f"zero denominator at column {col}")
            num /= den
        return num

    def parse_call(self) -> Measure:
        kind, name, col = self.advance()
        if kind != "name":
            raise MeasureParseError(f"expected a distribution name at column {col}, found {name!r}")
        key = name.lower()
        if key not in _BUILDERS:
            known = ", ".join(sorted(set(_CANONICAL.values())))
            raise MeasureParseError(f"unknown distribution {name!r} at column {col}; known: {known}")
        self.expect("(")
        if key in ("mixture", "mix"):
            inner = self.parse_sum()
            self.expect(")")
            if not isinstance(inner, Mixture):
                raise MeasureParseError("mixture(...) needs a weighted sum of components")
            return inner
        args, kwargs = self.parse_args()
        self.expect(")")
        try:
            return _BUILDERS[key](args, kwargs)
        except MeasureParseError:
            raise
        except (TypeError, ValueError) as exc:
            raise MeasureParseError(f"invalid parameters for {name!r} at column {col}: {exc}") from exc

    def parse_args(self):
        args, kwargs = [], {}
        if self.peek()[:2] == ("sym", ")"):
            return args, kwargs
        while True:
            if self.peek()[0] == "name":
                _, key, _ = self.advance()
                self.expect("=")
                value = self.parse_value()
                kwargs[key.lower()] = value
            else:
                if kwargs:
                    self.fail("positional argument after keyword argument")
                args.append(self.parse_value())
            if self.peek()[:2] == ("sym", ","):
                self.advance()
                continue
            return args, kwargs

    def parse_value(self):
        if self.peek()[:2] == ("sym", "["):
            self.advance()
            items = []
            if self.peek()[:2] != ("sym", "]"):
                while True:
                    items.append(self.parse_number())
                    if self.peek()[:2] == ("sym", ","):
                        self.advance()
                        continue
                    break
            self.expect("]")
            return items
        return self.parse_number()


def _pick(kwargs, aliases, default=None, required=True):
    for key in aliases:
        if key in kwargs:
            return kwargs.pop(key)
    if required and default is None:
        raise ValueError(f"missing parameter {aliases[0]!r}")
    return default


def _no_leftover(kwargs):
    if kwargs:
        raise ValueError(f"unknown parameters: {', '.join(sorted(kwargs))}")


def _build_gaussian(args, kwargs):
    mean = args[0] if len(args) > 0 else _pick(kwargs, ("mean", "loc"), 0.0, required=False)
    std = args[1] if len(args) > 1 else _pick(kwargs, ("std", "scale", "sigma"), 1.0, required=False)
    _no_leftover(kwargs)
    return Gaussian(float(mean), float(std))


def _build_laplace(args, kwargs):
    loc = args[0] if len(args) > 0 else _pick(kwargs, ("loc", "mean"), 0.0, required=False)
    scale = args[1] if len(args) > 1 else _pick(kwargs, ("scale", "b"), 1.0, required=False)
    _no_leftover(kwargs)
    return Laplace(float(loc), float(scale))


def _build_uniform(args, kwargs):
    a = args[0] if len(args) > 0 else _pick(kwargs, ("a", "lo", "low"))
    b = args[1] if len(args) > 1 else _pick(kwargs, ("b", "hi", "high"))
    _no_leftover(kwargs)
    return Uniform(float(a), float(b))


def _build_exponential(args, kwargs):
    scale = args[0] if len(args) > 0 else _pick(kwargs, ("scale", "theta"), 1.0, required=False)
    _no_leftover(kwargs)
    return Exponential(float(scale))


def _build_foldednormal(args, kwargs):
    loc = args[0] if len(args) > 0 else _pick(kwargs, ("loc", "mu", "mean"), 0.0, required=False)
    _no_leftover(kwargs)
    return FoldedNormal(float(loc))


def _build_discrete(args, kwargs):
    x = args[0] if len(args) > 0 else _pick(kwargs, ("x", "atoms"))
    w = args[1] if len(args) > 1 else _pick(kwargs, ("w", "weights"), required=False)
    _no_leftover(kwargs)
    x = [x] if np.isscalar(x) else x
    if w is None:
        w = [1.0 / len(x)] * len(x)
    w = [w] if np.isscalar(w) else w
    return Discrete(np.asarray(x, dtype=float), np.asarray(w, dtype=float))


def _build_dirac(args, kwargs):
    x = args[0] if args else _pick(kwargs, ("x", "loc"))
    _no_leftover(kwargs)
    return Discrete(np.array([float(x)]), np.array([1.0]))


def _build_empirical(args, kwargs):
    values = args[0] if args else _pick(kwargs, ("values", "sample"))
    _no_leftover(kwargs)
    return Empirical(np.asarray(values, dtype=float))


_BUILDERS = {
    "gaussian": _build_gaussian,
    "normal": _build_gaussian,
    "laplace": _build_laplace,
    "uniform": _build_uniform,
    "exponential": _build_exponential,
    "foldednormal": _build_foldednormal,
    "folded_normal": _build_foldednormal,
    "discrete": _build_discrete,
    "dirac": _build_dirac,
    "empirical": _build_empirical,
    "mixture": None,
    "mix": None,
}

_CANONICAL = {
    "gaussian": "gaussian", "normal": "gaussian", "laplace": "laplace",
    "uniform": "uniform", "exponential": "exponential",
    "foldednormal": "foldednormal", "folded_normal": "foldednormal",
    "discrete": "discrete", "dirac": "dirac", "empirical": "empirical",
    "mixture": "mixture", "mix": "mixture",
}


def parse_measure(text: str) -> Measure:
    """Parse a measure expression such as ``laplace(5,1)`` or a weighted mixture."""
    if not isinstance(text, str) or not text.strip():
        raise MeasureParseError("empty measure expression")
    return _Parser(text).parse_measure()
