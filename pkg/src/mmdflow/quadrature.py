"""Adaptive Simpson quadrature used by the distance and energy integrals.

The integrands we meet are smooth except for isolated kinks, jump
discontinuities at atoms, and integrable endpoint singularities.  Callers
split at known atoms and may override the endpoint values with one-sided
limits; the refinement depth cap keeps jump cells from recursing forever
while contributing only O(2^-depth) error.
"""

from __future__ import annotations

import math
from typing import Callable


class QuadratureError(ArithmeticError):
    """Raised when an integral cannot be evaluated to a usable accuracy."""


def adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    atol: float = 1e-10,
    max_depth: int = 40,
    fa: float | None = None,
    fb: float | None = None,
) -> float:
    """Integrate ``f`` over [a, b] to absolute tolerance ``atol``.

    ``fa``/``fb`` override the endpoint evaluations, which lets callers pass
    one-sided limits when the integrand jumps exactly at an endpoint.
    Raises QuadratureError on non-finite values or when the bottomed-out
    refinement residual is still far above the tolerance.
    """
    if not (b >= a):
        raise ValueError(f"integration bounds out of order: [{a}, {b}]")
    if a == b:
        return 0.0
    fa = f(a) if fa is None else fa
    fb = f(b) if fb is None else fb
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    total, residual = _simpson_rec(f, a, b, fa, fm, fb, whole, atol, max_depth)
    if not math.isfinite(total):
        raise QuadratureError(f"non-finite integral over [{a}, {b}]")
    # Residual collects |S2-S1|/15 of every interval that hit the depth cap.
    if residual > 1000.0 * atol:
        raise QuadratureError(
            f"quadrature did not converge over [{a}, {b}]: residual {residual:.3e}"
        )
    return total


def _simpson_rec(f, a, b, fa, fm, fb, whole, atol, depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = f(lm)
    frm = f(rm)
    if not (math.isfinite(flm) and math.isfinite(frm)):
        raise QuadratureError(f"non-finite integrand near [{a}, {b}]")
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if abs(delta) <= 15.0 * atol:
        return left + right + delta / 15.0, 0.0
    if depth <= 0:
        return left + right + delta / 15.0, abs(delta) / 15.0
    lval, lres = _simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * atol, depth - 1)
    rval, rres = _simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * atol, depth - 1)
    return lval + rval, lres + rres
