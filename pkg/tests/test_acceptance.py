"""End-to-end acceptance battery.

Each test asserts one headline guarantee of the package at its stated
tolerance and emits a single ``CRITERION k: PASS/FAIL`` line, repeated in
the terminal summary so the verdicts survive pytest's output capture.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from mmdflow import (
    QuantileGrid,
    Scheme,
    SolverConfig,
    SubgradientSelection,
    Target,
    closed_form_discrete,
    density_and_atoms,
    functional_F,
    grid_inner,
    grid_norm,
    grid_slack,
    implicit_euler_step,
    kernel_self_energy,
    lipschitz_estimate,
    mmd_squared,
    parse_measure,
    pointwise_ode_solve,
    run_flow,
    sample_quantile_grid,
    subgradient,
    w2_distance,
)
from mmdflow.cli import PRESETS, preset_run_specs

from conftest import record_verdict
from test_measures import zoo_variants


def report(num: int, ok: bool, desc: str):
    line = f"CRITERION {num}: {'PASS' if ok else 'FAIL'} - {desc}"
    print(line)
    record_verdict(line)
    assert ok, line


# ---------------------------------------------------------------------------
# shared runs


@pytest.fixture(scope="session")
def preset_runs():
    """Every preset under every applicable scheme, library-only (no files)."""
    runs = {}
    for name in sorted(PRESETS):
        for spec in preset_run_specs(name, Path("unused")):
            traj = run_flow(spec.mu0, spec.nu, spec.config)
            runs[name, spec.config.scheme] = (spec, traj)
    return runs


@pytest.fixture(scope="session")
def atom_to_uniform_run():
    cfg = SolverConfig(scheme=Scheme.IMPLICIT_EULER, tau=1e-3, n=1000, t_end=2.0,
                       snapshot_steps=(250, 500, 1000, 2000))
    start = time.perf_counter()
    traj = run_flow(parse_measure("dirac(0)"), parse_measure("uniform(0, 1)"), cfg)
    elapsed = time.perf_counter() - start
    return traj, elapsed


# ---------------------------------------------------------------------------
# 1: an atom spreads to the uniform law along the known analytic solution


def test_criterion_01_atom_to_uniform(atom_to_uniform_run):
    traj, elapsed = atom_to_uniform_run
    assert np.allclose(traj.times, [0.0, 0.25, 0.5, 1.0, 2.0])
    sup = 0.0
    for t, state in zip(traj.times[1:], traj.states[1:]):
        exact = state.s * (1.0 - math.exp(-2.0 * t))
        sup = max(sup, float(np.max(np.abs(state.values - exact))))
    target = Target.for_measure(parse_measure("uniform(0, 1)"))
    s_sub = traj.states[0].s[::100]
    pw_dev = 0.0
    for t in (0.25, 2.0):
        for s in s_sub:
            got = pointwise_ode_solve(0.0, target, float(s), t)
            pw_dev = max(pw_dev, abs(got - float(s) * (1.0 - math.exp(-2.0 * t))))
    ok = sup <= 5e-3 and pw_dev <= 1e-8 and elapsed < 30.0
    report(1, ok, f"atom-to-uniform: implicit sup err {sup:.2e} <= 5e-3, "
                  f"pointwise dev {pw_dev:.1e} <= 1e-8, runtime {elapsed:.1f}s < 30s")


# ---------------------------------------------------------------------------
# 2: atom-to-atom transport, exactly and numerically


def test_criterion_02_atom_to_atom():
    g0 = sample_quantile_grid(parse_measure("dirac(-1)"), 1000)
    t = Target.for_measure(parse_measure("dirac(0)"))
    exact_ok = all(
        np.array_equal(closed_form_discrete(g0, t, tt).values,
                       np.minimum(2.0 * g0.s * tt - 1.0, 0.0))
        for tt in (0.25, 1.0, 2.0))

    cfg = SolverConfig(scheme=Scheme.IMPLICIT_EULER, tau=1e-3, n=1000, t_end=2.0,
                       snapshot_steps=(250, 1000, 2000))
    traj = run_flow(parse_measure("dirac(-1)"), parse_measure("dirac(0)"), cfg)
    sup = 0.0
    for tt, state in zip(traj.times[1:], traj.states[1:]):
        want = np.minimum(2.0 * state.s * tt - 1.0, 0.0)
        sup = max(sup, float(np.max(np.abs(state.values - want))))

    est = density_and_atoms(traj.states[-1])
    near_zero = [mass for x, mass in est.atoms if abs(x) <= 1e-6]
    atom_mass = float(sum(near_zero))
    mass_ok = abs(atom_mass - 0.75) <= 2.0 / 1000

    ok = exact_ok and sup <= 5e-3 and mass_ok
    report(2, ok, f"atom-to-atom: closed form exact {exact_ok}, implicit sup err "
                  f"{sup:.2e} <= 5e-3, mass at 0 after t=2 is {atom_mass:.4f} "
                  f"(0.75 +- 0.002)")


# ---------------------------------------------------------------------------
# 3: the resolvent for a single atom is soft shrinkage


def test_criterion_03_soft_shrinkage_identity():
    rng = np.random.default_rng(12)
    t = Target.for_measure(parse_measure("dirac(0)"))
    atol = 1e-12
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(5, 200))
        g = QuantileGrid(np.sort(rng.normal(scale=3.0, size=n)))
        for tau in (0.01, 0.5):
            stepped = implicit_euler_step(g, t, tau, atol=atol)
            z = g.values + 2.0 * tau * g.s - tau
            soft = np.sign(z) * np.maximum(np.abs(z) - tau, 0.0)
            worst = max(worst, float(np.max(np.abs(stepped.values - soft))))
    ok = worst <= 10.0 * atol
    report(3, ok, f"soft shrinkage: worst deviation {worst:.2e} <= {10 * atol:.0e} "
                  f"over 100 random grids x 2 step sizes")


# ---------------------------------------------------------------------------
# 4: implicit scheme against the exact atomic flow; first-order convergence
# once trajectories cross CDF plateaus


def test_criterion_04_implicit_vs_exact_atomic():
    mu0 = parse_measure("1/3*dirac(-1) + 1/3*dirac(1/2) + 1/3*dirac(2)")
    t = Target.for_measure(parse_measure("1/4*dirac(0) + 3/4*dirac(1)"))
    g0 = sample_quantile_grid(mu0, 1000)
    taus = (4e-2, 2e-2, 1e-2, 5e-3)

    def implicit_error(horizon: float, tau: float) -> float:
        total = int(round(horizon / tau))
        cfg = SolverConfig(scheme=Scheme.IMPLICIT_EULER, tau=tau, n=1000,
                           t_end=horizon, snapshot_steps=(total,))
        traj = run_flow(mu0, t, cfg)
        exact = closed_form_discrete(g0, t, horizon).values
        return float(np.max(np.abs(traj.states[-1].values - exact)))

    # up to time 1 no grid point crosses a CDF plateau boundary, so every
    # implicit step solves the flow exactly (the errors are pure roundoff)
    errs_t1 = [implicit_error(1.0, tau) for tau in taus]
    exact_ok = max(errs_t1) <= 1e-9

    # by time 2 the slow points have crossed the atom at 0 mid-step and the
    # scheme is genuinely first order: errors fall at slope ~1 in log-log
    errs_t2 = [implicit_error(2.0, tau) for tau in taus]
    decreasing = all(b < a for a, b in zip(errs_t2, errs_t2[1:]))
    slope = float(np.polyfit(np.log(taus), np.log(errs_t2), 1)[0])
    ok = exact_ok and decreasing and slope >= 0.8
    report(4, ok, f"implicit vs exact atomic flow: t=1 roundoff only "
                  f"(max {max(errs_t1):.1e} <= 1e-9); t=2 errors "
                  f"{['%.2e' % e for e in errs_t2]} decreasing with order "
                  f"{slope:.2f} >= 0.8")


# ---------------------------------------------------------------------------
# 5: smoothing - the smallest quantile slope relaxes as 1 - e^{-2t}, sharply


def test_criterion_05_smoothing_lower_slope(atom_to_uniform_run):
    traj, _ = atom_to_uniform_run
    slack = grid_slack(traj.n)
    worst_low = worst_high = 0.0
    for t, state in zip(traj.times[1:], traj.states[1:]):
        l_low = lipschitz_estimate(state).l_low
        bound = 1.0 - math.exp(-2.0 * t)
        worst_low = max(worst_low, bound - slack - l_low)    # must stay above
        worst_high = max(worst_high, l_low - bound - slack)  # and stay sharp
    ok = worst_low <= 0.0 and worst_high <= 0.0
    report(5, ok, f"smoothing: min slope within +-(2/n + 1e-6) of 1 - e^(-2t) "
                  f"(below by {worst_low:.2e}, above by {worst_high:.2e})")


# ---------------------------------------------------------------------------
# 6: Lipschitz invariance for nested uniforms


def test_criterion_06_lipschitz_invariance():
    cfg = SolverConfig(scheme=Scheme.IMPLICIT_EULER, tau=0.01, n=1000, t_end=3.0,
                       snapshot_steps=(1, 2, 5, 10, 20, 50, 100, 200, 300))
    traj = run_flow(parse_measure("uniform(0.4, 0.6)"), parse_measure("uniform(0, 1)"),
                    cfg)
    slack = grid_slack(traj.n)
    worst = 0.0
    for t, state in zip(traj.times[1:], traj.states[1:]):
        lip = lipschitz_estimate(state).lip
        bound = 0.2 * math.exp(-2.0 * t) + 1.0 * (1.0 - math.exp(-2.0 * t))
        worst = max(worst, lip - bound - slack)
    ok = worst <= 0.0
    report(6, ok, f"Lipschitz invariance: max slope within slack of the "
                  f"exponential bound (worst excess {worst:.2e} <= 0)")


# ---------------------------------------------------------------------------
# 7: support endpoints move monotonically and stay inside the joint hull


def test_criterion_07_support_evolution(preset_runs):
    worst_rev = 0.0
    worst_hull = 0.0
    n_checked = 0
    for (name, scheme), (spec, traj) in preset_runs.items():
        if spec.mu0.has_atoms:
            continue
        n_checked += 1
        lo = np.asarray([rec.support_lo for rec in traj.diagnostics])
        hi = np.asarray([rec.support_hi for rec in traj.diagnostics])
        for seq in (lo, hi):
            steps = np.diff(seq)
            rev = min(float(np.max(steps, initial=0.0)),
                      float(np.max(-steps, initial=0.0)))
            worst_rev = max(worst_rev, rev)
        hull_lo, hull_hi = traj.target.hull
        joint_lo = min(hull_lo, float(lo[0]))
        joint_hi = max(hull_hi, float(hi[0]))
        worst_hull = max(worst_hull, joint_lo - float(lo.min()),
                         float(hi.max()) - joint_hi)
    ok = n_checked >= 7 and worst_rev <= 1e-9 and worst_hull <= 1e-9
    report(7, ok, f"support endpoints: {n_checked} continuous-start runs, worst "
                  f"reversal {worst_rev:.2e} <= 1e-9, worst hull escape "
                  f"{worst_hull:.2e} <= 1e-9")


# ---------------------------------------------------------------------------
# 8: the driving functional decays, at the universal O(1/t) rate


def test_criterion_08_functional_decay(preset_runs):
    worst_rise = 0.0
    for (name, scheme), (spec, traj) in preset_runs.items():
        if scheme is not Scheme.IMPLICIT_EULER:
            continue
        f_seq = np.asarray([rec.functional_value for rec in traj.diagnostics])
        worst_rise = max(worst_rise, float(np.max(np.diff(f_seq), initial=0.0)))

    spec, traj = preset_runs["unif-to-unif", Scheme.IMPLICIT_EULER]
    target = traj.target
    f_opt = functional_F(target.quantile_grid(traj.n), target)
    w2_sq = w2_distance(traj.states[0], target.quantile_grid(traj.n)) ** 2
    worst_gap = 0.0
    for t in (1.0, 5.0, 10.0):
        step = int(round(t / traj.tau))
        rec = traj.diagnostics[step]
        assert rec.time == pytest.approx(t)
        gap = rec.functional_value - f_opt
        worst_gap = max(worst_gap, gap - (w2_sq / (2.0 * t) + 1e-3))
    ok = worst_rise <= 1e-9 and worst_gap <= 0.0
    report(8, ok, f"energy decay: worst per-step rise {worst_rise:.2e} <= 1e-9; "
                  f"uniform-to-uniform gap within W2^2/(2t) + 1e-3 "
                  f"(worst excess {worst_gap:.2e})")


# ---------------------------------------------------------------------------
# 9: the functional differs from squared MMD by the target self-energy


def test_criterion_09_functional_mmd_identity():
    cont = ["uniform(-1, 2)", "gaussian(0.5, 1.5)", "laplace(-2, 0.7)",
            "exponential(1.2)", "foldednormal(0.3)",
            "0.5*gaussian(-2, 0.5) + 0.5*uniform(0, 1)"]
    anym = cont + ["dirac(0.25)", "discrete(x=[-1, 0.5, 2], w=[0.2, 0.5, 0.3])",
                   "0.5*uniform(0, 1) + 0.5*dirac(2)",
                   "0.25*dirac(-2) + 0.75*laplace(1, 0.5)"]
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        mu = parse_measure(cont[int(rng.integers(len(cont)))])
        nu = parse_measure(anym[int(rng.integers(len(anym)))])
        t = Target.for_measure(nu)
        lhs = functional_F(sample_quantile_grid(mu, 2000), t) + kernel_self_energy(nu)
        worst = max(worst, abs(lhs - mmd_squared(mu, nu)))
    ok = worst <= 1e-4
    report(9, ok, f"F + self-energy vs squared MMD: worst gap {worst:.2e} <= 1e-4 "
                  f"over 20 random pairs at n=2000")


# ---------------------------------------------------------------------------
# 10: structural invariants probed at scale, zero tolerance for violations


def test_criterion_10_invariant_battery(preset_runs):
    failures = []

    # (a) quantile/CDF adjunction on every measure variant
    for name, m in zoo_variants():
        rng = np.random.default_rng(101)
        s = rng.uniform(1e-9, 1.0 - 1e-9, 10_000)
        lo = float(m.quantile(1e-9)) - 1.0
        hi = float(m.quantile(1.0 - 1e-9)) + 1.0
        x = rng.uniform(lo, hi, 10_000)
        q = np.asarray(m.quantile(s))
        r = np.asarray(m.cdf_right(x))
        fwd = (q <= x) & ~(s <= r + 1e-9)
        bwd = (s <= r - 1e-9) & ~(q <= x + 1e-9)
        if int(fwd.sum()) or int(bwd.sum()):
            failures.append(f"adjunction[{name}]: {int(fwd.sum()) + int(bwd.sum())}")

    # (b) subgradient inequality of the convex functional
    rng = np.random.default_rng(202)
    targets = [Target.for_measure(parse_measure(e)) for e in
               ("uniform(0, 1)", "discrete(x=[-1, 0.5, 2], w=[0.2, 0.5, 0.3])",
                "gaussian(0, 1)")]
    selections = list(SubgradientSelection)
    bad_sub = 0
    for k in range(1000):
        t = targets[k % len(targets)]
        g = QuantileGrid(np.sort(rng.normal(scale=2.0, size=40)))
        h = QuantileGrid(np.sort(rng.normal(scale=2.0, size=40)))
        v = subgradient(g, t, selections[k % len(selections)])
        lhs = functional_F(h, t)
        rhs = functional_F(g, t) + grid_inner(v, h.values - g.values)
        if lhs < rhs - 1e-10:
            bad_sub += 1
    if bad_sub:
        failures.append(f"subgradient: {bad_sub}")

    # (c) nonexpansiveness of the implicit step
    rng = np.random.default_rng(303)
    bad_nonexp = 0
    for k in range(1000):
        t = targets[k % len(targets)]
        g = QuantileGrid(np.sort(rng.normal(scale=2.0, size=40)))
        h = QuantileGrid(np.sort(rng.normal(scale=2.0, size=40)))
        tau = float(rng.uniform(0.005, 1.0))
        d_out = grid_norm(implicit_euler_step(g, t, tau).values
                          - implicit_euler_step(h, t, tau).values)
        if d_out > grid_norm(g.values - h.values) + 1e-9:
            bad_nonexp += 1
    if bad_nonexp:
        failures.append(f"nonexpansiveness: {bad_nonexp}")

    # (d) every step of every preset run stays in the monotone cone
    bad_cone = 0
    for (name, scheme), (spec, traj) in preset_runs.items():
        bad_cone += sum(rec.monotonicity_violations > 0 for rec in traj.diagnostics)
        bad_cone += sum(not st.is_monotone() for st in traj.states)
    if bad_cone:
        failures.append(f"cone: {bad_cone}")

    ok = not failures
    report(10, ok, "invariants: 12x10^4 adjunction probes, 10^3 subgradient pairs, "
                   "10^3 resolvent pairs, cone preservation on all preset steps - "
                   + ("zero violations" if ok else "; ".join(failures)))
