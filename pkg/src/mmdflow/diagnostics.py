"""Executable checks of the flow's structural guarantees.

The smoothing bound says the smallest quantile slope relaxes exponentially
toward the target's smallest slope; the Lipschitz bound says the largest
slope does the same from above when the target has compact interval support
containing the initial one.  Both are checked on grid difference quotients
with a slack of 2/n + 1e-6 for the midpoint discretization.  Support
endpoints are checked for monotone movement and confinement to the
relevant hull, and the functional value for monotone decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .flow_core import Target
from .grids import QuantileGrid
from .measures import Measure
from .solvers import FlowTrajectory, Scheme

__all__ = [
    "LipschitzReport",
    "BoundCheck",
    "grid_slack",
    "lipschitz_estimate",
    "smoothing_bound",
    "lip_invariance_bound",
    "check_trajectory",
    "duality_check",
]


def grid_slack(n: int) -> float:
    """Discretization slack for grid estimates of the quantile-slope bounds."""
    return 2.0 / n + 1e-6


@dataclass(frozen=True)
class LipschitzReport:
    """Extreme adjacent difference quotients of a monotone grid."""

    l_low: float
    lip: float
    computed_on: str = ""

    def __post_init__(self):
        if not self.l_low <= self.lip:
            raise ValueError("l_low must not exceed lip")


@dataclass(frozen=True)
class BoundCheck:
    """One verified inequality: status is 'pass', 'fail' or 'skipped'."""

    check: str
    time: float
    observed: float
    bound: float
    slack: float
    status: str

    def __post_init__(self):
        if self.status not in ("pass", "fail", "skipped"):
            raise ValueError(f"invalid status: {self.status!r}")

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    @property
    def ok(self) -> bool:
        return self.status != "fail"


def lipschitz_estimate(g: QuantileGrid, label: str = "") -> LipschitzReport:
    """Smallest and largest slope of g over adjacent grid midpoints.

    The grid spacing is exactly 1/n, so the quotients are n*(g_{i+1}-g_i);
    for monotone data adjacent pairs attain the extreme quotients among all
    pairs.  Requires a monotone grid.
    """
    if not g.is_monotone():
        raise ValueError("Lipschitz estimates require a monotone grid")
    quot = g.n * np.diff(g.values)
    return LipschitzReport(float(np.min(quot)), float(np.max(quot)), label)


def smoothing_bound(t_time: float, l_low_g0: float, l_low_target: float) -> float:
    """Lower bound on the smallest quantile slope at time t_time.

    The smallest slope of the state interpolates exponentially from its
    initial value toward the target's smallest slope, with time constant
    half that slope.  Requires a strictly positive target constant.
    """
    if not t_time >= 0.0:
        raise ValueError("time must be nonnegative")
    if not l_low_g0 >= 0.0:
        raise ValueError("initial constant must be nonnegative")
    if not (l_low_target > 0.0 and math.isfinite(l_low_target)):
        raise ValueError("target lower constant must be positive and finite")
    decay = math.exp(-2.0 * t_time / l_low_target)
    return l_low_g0 * decay + l_low_target * (1.0 - decay)


def lip_invariance_bound(t_time: float, lip_g0: float, lip_target: float) -> float:
    """Upper bound on the largest quantile slope at time t_time.

    Same exponential interpolation as the smoothing bound, approached from
    above.  A zero target constant is only meaningful in the degenerate
    single-atom case (then the state is constant too).
    """
    if not t_time >= 0.0:
        raise ValueError("time must be nonnegative")
    if not lip_g0 >= 0.0:
        raise ValueError("initial constant must be nonnegative")
    if not (lip_target >= 0.0 and math.isfinite(lip_target)):
        raise ValueError("target constant must be finite and nonnegative")
    if lip_target == 0.0:
        if t_time == 0.0:
            return lip_g0
        if lip_g0 == 0.0:
            return 0.0
        raise ValueError("zero target constant requires a constant initial state")
    decay = math.exp(-2.0 * t_time / lip_target)
    return lip_g0 * decay + lip_target * (1.0 - decay)


# ---------------------------------------------------------------------------
# trajectory checks


def _monotone_reversal(seq: np.ndarray) -> float:
    """Largest step against the best monotone direction (0 for monotone)."""
    steps = np.diff(seq)
    if steps.size == 0:
        return 0.0
    up = float(np.max(steps, initial=0.0))        # worst rise (for nonincreasing)
    down = float(np.max(-steps, initial=0.0))     # worst fall (for nondecreasing)
    return min(up, down)


def _status(ok: bool) -> str:
    return "pass" if ok else "fail"


def check_trajectory(traj: FlowTrajectory, t: Target | None = None) -> list[BoundCheck]:
    """Verify the structural guarantees a trajectory is subject to.

    Emits support-endpoint monotonicity, hull confinement, the smoothing
    and Lipschitz-invariance bounds at every snapshot, and monotone decay
    of the functional.  Checks whose hypotheses the run does not satisfy
    are reported with status 'skipped' rather than silently passed.
    """
    if t is None:
        t = traj.target
    checks: list[BoundCheck] = []
    t_final = float(traj.times[-1])
    slack = grid_slack(traj.n)
    exact = traj.scheme in (Scheme.CLOSED_FORM_DISCRETE, Scheme.POINTWISE_ODE)
    states_monotone = all(g.is_monotone() for g in traj.states)

    # (a) support-endpoint monotonicity: each endpoint moves one way only.
    # Asserted for convex initial support; informational otherwise since
    # the guarantee for disconnected initial support is not established.
    initial_convex = (traj.initial_measure.support_is_interval()
                      if traj.initial_measure is not None
                      else QuantileGrid(traj.states[0].values).monotonicity_violations() == 0)
    lo_seq = np.asarray([rec.support_lo for rec in traj.diagnostics])
    hi_seq = np.asarray([rec.support_hi for rec in traj.diagnostics])
    for name, seq in (("support-lower-monotone", lo_seq),
                      ("support-upper-monotone", hi_seq)):
        observed = _monotone_reversal(seq)
        status = _status(observed <= 1e-9) if initial_convex else "skipped"
        checks.append(BoundCheck(name, t_final, observed, 0.0, 1e-9, status))

    # (b) hull confinement
    all_vals_lo = min(float(g.values[0]) for g in traj.states)
    all_vals_hi = max(float(g.values[-1]) for g in traj.states)
    hull_lo, hull_hi = t.hull
    init_lo, init_hi = float(traj.states[0].values[0]), float(traj.states[0].values[-1])
    nested = init_lo >= hull_lo - 1e-9 and init_hi <= hull_hi + 1e-9
    violation = max(hull_lo - all_vals_lo, all_vals_hi - hull_hi, 0.0)
    status = _status(violation <= 1e-9) if nested else "skipped"
    checks.append(BoundCheck("target-hull-confinement", t_final, violation, 0.0, 1e-9, status))

    joint_lo = min(hull_lo, init_lo)
    joint_hi = max(hull_hi, init_hi)
    joint_violation = max(joint_lo - all_vals_lo, all_vals_hi - joint_hi, 0.0)
    checks.append(BoundCheck("joint-hull-confinement", t_final, joint_violation, 0.0,
                             1e-9, _status(joint_violation <= 1e-9)))

    # (c) smoothing bound at every snapshot.  The explicit scheme's slope
    # recursion can lag the exponential by O(tau) beyond the slack when the
    # initial slopes exceed the target's, so only the implicit and exact
    # schemes are asserted.
    smoothing_ok = (t.l_low_Q > 0.0 and math.isfinite(t.l_low_Q) and states_monotone
                    and traj.scheme is not Scheme.EXPLICIT_EULER)
    if smoothing_ok:
        l_low_0 = lipschitz_estimate(traj.states[0]).l_low
        for time, state in zip(traj.times, traj.states):
            bound = smoothing_bound(float(time), l_low_0, t.l_low_Q)
            observed = lipschitz_estimate(state).l_low
            checks.append(BoundCheck("smoothing-lower-slope", float(time), observed,
                                     bound, slack, _status(observed >= bound - slack)))
    else:
        checks.append(BoundCheck("smoothing-lower-slope", t_final, math.nan,
                                 math.nan, slack, "skipped"))

    # (d) Lipschitz invariance at every snapshot.  Hypotheses: target
    # support is a compact interval containing the initial values and the
    # target slope is finite.  The explicit scheme's slope recursion can
    # overshoot the exponential by O(tau) within the slack, so only
    # trajectories of the implicit or exact schemes are asserted.
    lip_hyp = (t.support_interval
               and math.isfinite(hull_lo) and math.isfinite(hull_hi)
               and 0.0 < t.lip_Q and math.isfinite(t.lip_Q)
               and nested and states_monotone
               and traj.scheme is not Scheme.EXPLICIT_EULER)
    if lip_hyp:
        lip_0 = lipschitz_estimate(traj.states[0]).lip
        for time, state in zip(traj.times, traj.states):
            bound = lip_invariance_bound(float(time), lip_0, t.lip_Q)
            observed = lipschitz_estimate(state).lip
            checks.append(BoundCheck("lip-upper-slope", float(time), observed,
                                     bound, slack, _status(observed <= bound + slack)))
    else:
        checks.append(BoundCheck("lip-upper-slope", t_final, math.nan,
                                 math.nan, slack, "skipped"))

    # (e) functional decay, guaranteed per step for the implicit scheme and
    # along the exact solutions; the explicit scheme carries no guarantee.
    f_seq = np.asarray([rec.functional_value for rec in traj.diagnostics])
    worst_rise = float(np.max(np.diff(f_seq), initial=0.0)) if f_seq.size > 1 else 0.0
    decay_applicable = traj.scheme is Scheme.IMPLICIT_EULER or exact
    status = _status(worst_rise <= 1e-9) if decay_applicable else "skipped"
    checks.append(BoundCheck("functional-decay", t_final, worst_rise, 0.0, 1e-9, status))

    return checks


# ---------------------------------------------------------------------------
# quantile/CDF slope duality


def duality_check(m: Measure, n_probe: int = 1000, seed: int = 0,
                  slack: float = 1e-9) -> bool:
    """Probe the equivalence between quantile slope bounds and CDF Lipschitz
    bounds: slopes of Q at least L correspond to the CDF being 1/L-Lipschitz
    everywhere, and slopes at most C to CDF quotients of at least 1/C on the
    support hull.  Returns True iff no probe violates either side by more
    than the slack; sides with no admissible constant are vacuous.
    """
    rng = np.random.default_rng(seed)
    l_low, lip = m.lipschitz_constants()
    s_pairs = np.sort(rng.uniform(1e-6, 1.0 - 1e-6, size=(n_probe, 2)), axis=1)
    keep = s_pairs[:, 1] - s_pairs[:, 0] > 1e-12
    s1, s2 = s_pairs[keep, 0], s_pairs[keep, 1]
    q_quot = (np.asarray(m.quantile(s2)) - np.asarray(m.quantile(s1))) / (s2 - s1)

    lo_w, hi_w = m._tail_window(1e-9)
    pad = 0.5 * (hi_w - lo_w) + 1.0
    x_pairs = np.sort(rng.uniform(lo_w - pad, hi_w + pad, size=(n_probe, 2)), axis=1)
    xk = x_pairs[:, 1] - x_pairs[:, 0] > 1e-12
    x1, x2 = x_pairs[xk, 0], x_pairs[xk, 1]
    r_quot = (np.asarray(m.cdf_right(x2)) - np.asarray(m.cdf_right(x1))) / (x2 - x1)

    ok = True
    if l_low > 0.0:
        ok &= bool(np.all(q_quot >= l_low - slack))
        ok &= bool(np.all(r_quot <= 1.0 / l_low + slack))
    if math.isfinite(lip):
        ok &= bool(np.all(q_quot <= lip + slack))
        if lip > 0.0:
            hull_lo, hull_hi = m.support_hull()
            u_pairs = np.sort(rng.uniform(hull_lo, hull_hi, size=(n_probe, 2)), axis=1)
            uk = u_pairs[:, 1] - u_pairs[:, 0] > 1e-12
            u1, u2 = u_pairs[uk, 0], u_pairs[uk, 1]
            h_quot = (np.asarray(m.cdf_right(u2)) - np.asarray(m.cdf_right(u1))) / (u2 - u1)
            ok &= bool(np.all(h_quot >= 1.0 / lip - slack))
    return ok
