"""Time steppers and exact solvers for the quantile-space gradient flow.

Implicit Euler is the resolvent of the subdifferential: per grid point the
new value x solves  g_i + 2*tau*s_i  in  x + 2*tau*[cdf_left(x), cdf_right(x)],
a strictly increasing inclusion solved by bisection on the analytically
guaranteed bracket [y - 2*tau, y].  Explicit Euler applies the plain
gradient and therefore requires a target without atoms; it can leave the
cone of increasing functions for large steps, which a policy handles.
Purely atomic targets admit an exact piecewise-linear-in-time solution, and
any target admits an exact pointwise solution through the time
reparametrization integral; both are evaluated directly at requested times.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .flow_core import Target, functional_F, gradient_continuous, w2_distance
from .grids import QuantileGrid, sample_quantile_grid
from .measures import Measure
from .quadrature import adaptive_simpson

__all__ = [
    "MonotonicityError",
    "NotDiscreteTargetError",
    "DiscontinuityPointError",
    "Scheme",
    "MonotonicityPolicy",
    "SolverConfig",
    "StepRecord",
    "FlowTrajectory",
    "implicit_euler_step",
    "explicit_euler_step",
    "isotonic_projection",
    "closed_form_discrete",
    "pointwise_ode_solve",
    "time_to_target",
    "run_flow",
]


class MonotonicityError(RuntimeError):
    """An explicit step left the cone of increasing functions."""


class NotDiscreteTargetError(ValueError):
    """The closed-form discrete solver needs a purely atomic target."""


class DiscontinuityPointError(ValueError):
    """The pointwise solver was asked for a jump level of the target quantile."""


class Scheme(enum.Enum):
    IMPLICIT_EULER = "implicit"
    EXPLICIT_EULER = "explicit"
    CLOSED_FORM_DISCRETE = "exact-discrete"
    POINTWISE_ODE = "pointwise-ode"


class MonotonicityPolicy(enum.Enum):
    ERROR = "error"
    WARN = "warn"
    PROJECT = "project"


@dataclass(frozen=True)
class SolverConfig:
    """Numerical parameters of a flow run."""

    scheme: Scheme = Scheme.IMPLICIT_EULER
    tau: float = 0.01
    n: int = 1000
    t_end: float = 1.0
    bisect_atol: float = 1e-12
    monotonicity_policy: MonotonicityPolicy = MonotonicityPolicy.WARN
    snapshot_steps: tuple[int, ...] | None = None
    snapshot_stride: int | None = None
    snapshot_times: tuple[float, ...] | None = None

    def __post_init__(self):
        if not (self.tau > 0.0 and math.isfinite(self.tau)):
            raise ValueError("tau must be positive and finite")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError("n must be an integer >= 2")
        if not (self.t_end >= 0.0 and math.isfinite(self.t_end)):
            raise ValueError("t_end must be nonnegative and finite")
        if not (0.0 < self.bisect_atol <= 1e-3):
            raise ValueError("bisect_atol must lie in (0, 1e-3]")
        if self.snapshot_stride is not None and self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        chosen = [name for name in ("snapshot_steps", "snapshot_stride", "snapshot_times")
                  if getattr(self, name) is not None]
        if len(chosen) > 1:
            raise ValueError("choose at most one of snapshot_steps, snapshot_stride, "
                             "snapshot_times")


@dataclass(frozen=True)
class StepRecord:
    """Per-step scalar diagnostics of a trajectory."""

    step: int
    time: float
    functional_value: float
    w2_to_target: float
    monotonicity_violations: int
    support_lo: float
    support_hi: float


@dataclass(frozen=True)
class FlowTrajectory:
    """Snapshots plus per-step diagnostics of one flow run.

    ``states[0]`` is always the initial grid at time 0; ``times`` holds the
    snapshot times in increasing order.  ``diagnostics`` has one record per
    computed step (every step for the stepping schemes, one per snapshot for
    the exact solvers).
    """

    scheme: Scheme
    tau: float
    n: int
    times: np.ndarray
    states: tuple[QuantileGrid, ...]
    diagnostics: tuple[StepRecord, ...]
    target: Target
    initial_measure: Measure | None = None
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.shape != (len(self.states),):
            raise ValueError("times and states lengths differ")
        if times.size == 0 or times[0] != 0.0 or np.any(np.diff(times) <= 0.0):
            raise ValueError("snapshot times must start at 0 and strictly increase")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "diagnostics", tuple(self.diagnostics))


# ---------------------------------------------------------------------------
# implicit Euler


def implicit_euler_step(g: QuantileGrid, t: Target, tau: float,
                        atol: float = 1e-12) -> QuantileGrid:
    """One resolvent step of size tau, solved by vectorized bisection.

    The map x -> x + 2*tau*cdf_right(x) is strictly increasing, so the
    update solves x + 2*tau*cdf_right(x) >= y = g_i + 2*tau*s_i at its
    smallest root, which also satisfies the full two-sided inclusion with
    cdf_left (verified after the solve).  Output ties within the bisection
    tolerance are repaired by a running maximum so the step maps the cone
    into itself exactly, matching the exact resolvent's monotonicity.
    """
    if not (tau > 0.0):
        raise ValueError("tau must be positive")
    values = g.values
    y = values + 2.0 * tau * g.s
    cdf = t.measure.cdf_right
    lo = y - 2.0 * tau
    hi = y.copy()
    width = 2.0 * tau
    iters = max(1, math.ceil(math.log2(width / atol))) if width > atol else 1
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        ge = mid + 2.0 * tau * np.asarray(cdf(mid)) >= y
        hi = np.where(ge, mid, hi)
        lo = np.where(ge, lo, mid)
    x = 0.5 * (lo + hi)
    x = np.maximum.accumulate(x)
    _verify_resolvent(x, y, t, tau, atol)
    return QuantileGrid(x)


def _verify_resolvent(x, y, t, tau, atol):
    slack = 1e-9 * (1.0 + np.abs(y))
    low_side = (x - atol) + 2.0 * tau * np.asarray(t.measure.cdf_left(x - atol))
    high_side = (x + atol) + 2.0 * tau * np.asarray(t.measure.cdf_right(x + atol))
    if np.any(low_side > y + slack) or np.any(high_side < y - slack):
        raise ArithmeticError("implicit step failed the resolvent inclusion check")


# ---------------------------------------------------------------------------
# explicit Euler


def isotonic_projection(v: np.ndarray) -> np.ndarray:
    """L2 projection onto nondecreasing vectors (pool adjacent violators)."""
    vals: list[float] = []
    counts: list[int] = []
    for x in np.asarray(v, dtype=float):
        vals.append(float(x))
        counts.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            v2, c2 = vals.pop(), counts.pop()
            v1, c1 = vals.pop(), counts.pop()
            vals.append((v1 * c1 + v2 * c2) / (c1 + c2))
            counts.append(c1 + c2)
    return np.repeat(vals, counts)


def _explicit_values(g: QuantileGrid, t: Target, tau: float) -> np.ndarray:
    return g.values - tau * gradient_continuous(g, t)


def explicit_euler_step(g: QuantileGrid, t: Target, tau: float,
                        policy: MonotonicityPolicy = MonotonicityPolicy.WARN) -> QuantileGrid:
    """One explicit gradient step; the policy decides what to do if the
    update leaves the cone (Error raises, Warn keeps the state as is,
    Project applies the isotonic projection)."""
    if not (tau > 0.0):
        raise ValueError("tau must be positive")
    x = _explicit_values(g, t, tau)
    violations = int(np.sum(np.diff(x) < 0.0))
    if violations and policy is MonotonicityPolicy.ERROR:
        raise MonotonicityError(
            f"explicit step produced {violations} monotonicity violations; "
            "reduce tau or use the project policy")
    if violations and policy is MonotonicityPolicy.PROJECT:
        x = isotonic_projection(x)
    return QuantileGrid(x)


# ---------------------------------------------------------------------------
# exact solution for purely atomic targets


def closed_form_discrete(g0: QuantileGrid | Measure, t: Target, time: float,
                         n: int | None = None) -> QuantileGrid:
    """Exact flow state at ``time`` for a purely atomic target.

    Per grid point the trajectory is piecewise linear in time: it moves at
    speed 2*(s - W) across each inter-atom gap with plateau mass W, until it
    reaches the target quantile.  Grid levels s that hit a cumulative weight
    exactly are evaluated by the left-continuous convention (the motion
    halts at the entered gap); they are reported via run_flow notes.
    """
    values, _ = _closed_form_values(g0, t, time, n)
    return QuantileGrid(values)


def _closed_form_values(g0, t: Target, time: float, n: int | None):
    if not t.is_purely_atomic:
        raise NotDiscreteTargetError("closed-form solver requires a purely atomic target")
    if time < 0.0:
        raise ValueError("time must be nonnegative")
    if isinstance(g0, Measure):
        if n is None:
            raise ValueError("n is required when the initial condition is a measure")
        g0 = sample_quantile_grid(g0, n)
    xs = t.atom_x
    cumw = t.atom_cumw
    w_levels = cumw[1:]
    s_grid = g0.s
    out = np.empty(g0.n)
    boundary = 0
    for i, (q0, s) in enumerate(zip(g0.values, s_grid)):
        l0 = int(np.searchsorted(w_levels, s, side="left"))
        if w_levels[l0] == s:
            boundary += 1
        out[i] = _flow_point(float(q0), float(s), xs, cumw, l0, time)
    # the exact solution is monotone in s; repair rounding-level ties so the
    # returned grid satisfies the cone predicate exactly
    if np.any(np.diff(out) < -1e-9):
        raise ArithmeticError("closed-form evaluation lost monotonicity")
    return np.maximum.accumulate(out), boundary


def _flow_point(q0: float, s: float, xs: np.ndarray, cumw: np.ndarray,
                l0: int, time: float) -> float:
    q_target = float(xs[l0])
    if q0 == q_target:
        return q0
    x_cur, t_cur = q0, 0.0
    if q0 < q_target:
        c = int(np.searchsorted(xs, q0, side="right"))
        for j in range(c, l0 + 1):
            slope = 2.0 * (s - cumw[j])
            dt = (xs[j] - x_cur) / slope
            if time < t_cur + dt:
                return x_cur + slope * (time - t_cur)
            x_cur, t_cur = float(xs[j]), t_cur + dt
        return q_target
    c = int(np.searchsorted(xs, q0, side="left"))
    while c > l0:
        slope = 2.0 * (s - cumw[c])
        if slope == 0.0:
            # s sits exactly on a cumulative weight: the motion stalls in
            # the gap it has entered and never crosses the next atom.
            return x_cur
        dt = (xs[c - 1] - x_cur) / slope
        if time < t_cur + dt:
            return x_cur + slope * (time - t_cur)
        x_cur, t_cur = float(xs[c - 1]), t_cur + dt
        c -= 1
    return q_target


# ---------------------------------------------------------------------------
# exact pointwise solution through the time reparametrization integral


def _reparam_integral(q0_s: float, t: Target, s: float, x: float,
                      quad_atol: float, max_depth: int) -> float:
    """Integral of 1/(s - cdf(z)) from the initial quantile to x, split at atoms.

    Endpoint values use the one-sided CDF limits (right at the lower end,
    left at the upper end), which are the correct limits of the integrand
    on each open piece, so atoms of the target never stall the refinement.
    """
    a, b = (q0_s, x) if x >= q0_s else (x, q0_s)
    sign = 1.0 if x >= q0_s else -1.0
    cuts = [a, b]
    atoms = t.measure.atom_locations()
    if atoms.size:
        cuts.extend(z for z in atoms.tolist() if a < z < b)
    cuts = np.unique(np.asarray(cuts, dtype=float))
    cdf_right = t.measure.cdf_right
    cdf_left = t.measure.cdf_left

    def f(z: float) -> float:
        return 1.0 / (s - float(cdf_right(z)))

    total = 0.0
    for p, q in zip(cuts[:-1], cuts[1:]):
        fa = 1.0 / (s - float(cdf_right(p)))
        fb = 1.0 / (s - float(cdf_left(q)))
        total += adaptive_simpson(f, float(p), float(q), atol=quad_atol,
                                  max_depth=max_depth, fa=fa, fb=fb)
    return sign * total


def _check_continuity_level(t: Target, s: float):
    lv = t.jump_levels
    if lv.size and np.min(np.abs(lv - s)) <= 1e-12:
        raise DiscontinuityPointError(
            f"s = {s!r} is a jump level of the target quantile; "
            "the pointwise solution is not defined there")


def time_to_target(q0_s: float, t: Target, s: float,
                   quad_atol: float = 1e-10, max_depth: int = 40) -> float:
    """Arrival time of level s at the target quantile (may be infinite).

    The integrand 1/(s - cdf) blows up at the target quantile exactly when
    the one-sided CDF limit there equals s; for bounded-density targets the
    blow-up is then at least of order 1/(distance), so the arrival time is
    infinite.  Otherwise the integrand stays bounded and one quadrature with
    the one-sided endpoint limit gives the exact arrival time.
    """
    if not (0.0 < s < 1.0):
        raise ValueError("s must lie strictly inside (0, 1)")
    _check_continuity_level(t, s)
    q0 = float(q0_s)
    q_target = float(t.measure.quantile(s))
    if q0 == q_target:
        return 0.0
    if q0 < q_target:
        gap = s - float(t.measure.cdf_left(q_target))
    else:
        gap = float(t.measure.cdf_right(q_target)) - s
    if gap <= 1e-9:
        return math.inf
    phi = _reparam_integral(q0, t, s, q_target, quad_atol, max_depth)
    return 0.5 * abs(phi)


def pointwise_ode_solve(q0_s: float, t: Target, s: float, time: float,
                        xtol: float = 1e-12, quad_atol: float = 1e-10,
                        max_depth: int = 40) -> float:
    """Exact state value at level s and the given time.

    Inverts the strictly increasing reparametrization integral by bisection
    between the initial value and the target quantile; once the requested
    time reaches the (possibly infinite) arrival time the target quantile
    is returned.  Only defined at continuity levels of the target quantile.
    """
    if not (0.0 < s < 1.0):
        raise ValueError("s must lie strictly inside (0, 1)")
    if time < 0.0:
        raise ValueError("time must be nonnegative")
    _check_continuity_level(t, s)
    q0 = float(q0_s)
    q_target = float(t.measure.quantile(s))
    if q0 == q_target or time == 0.0:
        return q0
    arrival = time_to_target(q0, t, s, quad_atol=quad_atol, max_depth=max_depth)
    if time >= arrival:
        return q_target
    budget = 2.0 * time
    span = q_target - q0
    lo_fr, hi_fr = 0.0, 1.0
    phi_lo = 0.0
    # The integral is additive, so each probe only integrates the short piece
    # between the current lower bracket end and the midpoint.
    while abs(span) * (hi_fr - lo_fr) > xtol:
        mid_fr = 0.5 * (lo_fr + hi_fr)
        seg = abs(_reparam_integral(q0 + span * lo_fr, t, s, q0 + span * mid_fr,
                                    quad_atol, max_depth))
        if phi_lo + seg < budget:
            lo_fr, phi_lo = mid_fr, phi_lo + seg
        else:
            hi_fr = mid_fr
    return q0 + span * (0.5 * (lo_fr + hi_fr))


# ---------------------------------------------------------------------------
# orchestration


def _diag_record(step: int, time: float, state: QuantileGrid, t: Target,
                 target_grid: QuantileGrid) -> StepRecord:
    return StepRecord(
        step=step,
        time=time,
        functional_value=functional_F(state, t),
        w2_to_target=w2_distance(state, target_grid),
        monotonicity_violations=state.monotonicity_violations(),
        support_lo=float(state.values[0]),
        support_hi=float(state.values[-1]),
    )


def _snapshot_steps(cfg: SolverConfig, total: int) -> list[int]:
    if cfg.snapshot_steps is not None:
        keep = sorted({int(k) for k in cfg.snapshot_steps if 0 <= k <= total} | {0})
        return keep
    if cfg.snapshot_stride is not None:
        keep = set(range(0, total + 1, cfg.snapshot_stride)) | {0, total}
        return sorted(keep)
    if cfg.snapshot_times is not None:
        # stepped schemes snapshot at the step closest to each requested time
        keep = {int(round(x / cfg.tau)) for x in cfg.snapshot_times}
        return sorted({k for k in keep if 0 <= k <= total} | {0})
    return list(range(total + 1))


def run_flow(mu0: Measure, target: Target | Measure, cfg: SolverConfig) -> FlowTrajectory:
    """Run one flow and collect snapshots plus per-step diagnostics."""
    t = target if isinstance(target, Target) else Target.for_measure(target)
    g0 = sample_quantile_grid(mu0, cfg.n)
    target_grid = t.quantile_grid(cfg.n)
    notes: list[str] = []

    if cfg.scheme in (Scheme.IMPLICIT_EULER, Scheme.EXPLICIT_EULER):
        total = int(round(cfg.t_end / cfg.tau))
        keep = set(_snapshot_steps(cfg, total))
        times = [0.0]
        states = [g0]
        diags = [_diag_record(0, 0.0, g0, t, target_grid)]
        state = g0
        warned_steps = 0
        for k in range(1, total + 1):
            if cfg.scheme is Scheme.IMPLICIT_EULER:
                state = implicit_euler_step(state, t, cfg.tau, cfg.bisect_atol)
            else:
                state = explicit_euler_step(state, t, cfg.tau, cfg.monotonicity_policy)
                if state.monotonicity_violations():
                    warned_steps += 1
            time_k = k * cfg.tau
            diags.append(_diag_record(k, time_k, state, t, target_grid))
            if k in keep and k > 0:
                times.append(time_k)
                states.append(state)
        if warned_steps:
            msg = f"{warned_steps} explicit steps left the monotone cone"
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        return FlowTrajectory(cfg.scheme, cfg.tau, cfg.n, np.asarray(times), states,
                              diags, t, initial_measure=mu0, notes=tuple(notes))

    if cfg.snapshot_times is not None:
        times_req = sorted({float(x) for x in cfg.snapshot_times if x > 0.0})
    else:
        total = int(round(cfg.t_end / cfg.tau))
        times_req = [k * cfg.tau for k in _snapshot_steps(cfg, total) if k > 0]
    times = [0.0]
    states = [g0]
    diags = [_diag_record(0, 0.0, g0, t, target_grid)]
    boundary_total = 0
    for time_k in times_req:
        if cfg.scheme is Scheme.CLOSED_FORM_DISCRETE:
            vals, nb = _closed_form_values(g0, t, time_k, None)
            boundary_total = max(boundary_total, nb)
            state = QuantileGrid(vals)
        elif cfg.scheme is Scheme.POINTWISE_ODE:
            vals = np.array([
                pointwise_ode_solve(float(q0i), t, float(si), time_k,
                                    xtol=cfg.bisect_atol)
                for q0i, si in zip(g0.values, g0.s)
            ])
            state = QuantileGrid(np.maximum.accumulate(vals))
        else:
            raise ValueError(f"unknown scheme: {cfg.scheme}")
        times.append(time_k)
        states.append(state)
        diags.append(_diag_record(int(round(time_k / cfg.tau)), time_k, state, t, target_grid))
    if boundary_total:
        notes.append(
            f"{boundary_total} grid levels sit exactly on a cumulative target weight; "
            "evaluated by the left-continuous convention")
    return FlowTrajectory(cfg.scheme, cfg.tau, cfg.n, np.asarray(times), states,
                          diags, t, initial_measure=mu0, notes=tuple(notes))
