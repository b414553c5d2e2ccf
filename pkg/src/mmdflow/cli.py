"""Command-line front end: TOML run specs, built-in presets, CSV/SVG export.

A run specification is a TOML document with two measure expressions and
optional solver/output tables::

    mu0 = "gaussian(5, 1)"
    nu = "gaussian(-5, 1)"
    scheme = "implicit"      # may also live under [solver]
    tau = 0.01
    n = 1000
    t_end = 2.0
    snapshots = [10, 100, 200]

    [output]
    outdir = "out/gauss"
    emit = ["quantiles", "densities", "diagnostics", "checks"]

All CSV numbers are written with 17 significant digits so identical runs
produce byte-identical files.  Exit codes: 0 success, 2 configuration
error, 3 numerical failure, 4 failed checks under --strict.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .diagnostics import BoundCheck, check_trajectory
from .flow_core import AtomicTargetError, density_and_atoms
from .measures import Measure, MeasureParseError, parse_measure
from .quadrature import QuadratureError
from .grids import QuantileGrid
from .solvers import (
    DiscontinuityPointError,
    FlowTrajectory,
    MonotonicityError,
    MonotonicityPolicy,
    NotDiscreteTargetError,
    Scheme,
    SolverConfig,
    isotonic_projection,
    run_flow,
)

__all__ = [
    "RunSpec",
    "RunSpecError",
    "parse_run_spec",
    "PRESETS",
    "preset_run_specs",
    "run_preset",
    "execute_run",
    "emit_plot_data",
    "main",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_CHECKS = 4

_EMIT_KINDS = ("quantiles", "densities", "diagnostics", "checks")
_SOLVER_KEYS = ("scheme", "tau", "n", "t_end", "bisect_atol", "monotonicity_policy",
                "snapshots", "snapshot_times", "snapshot_stride")
_OUTPUT_KEYS = ("outdir", "emit", "svg")


class RunSpecError(ValueError):
    """Invalid or incomplete run specification."""


@dataclass(frozen=True)
class RunSpec:
    """A fully validated run: measures, solver parameters, output plan."""

    mu0_expr: str
    nu_expr: str
    mu0: Measure
    nu: Measure
    config: SolverConfig
    outdir: Path | None = None
    emit: tuple[str, ...] = _EMIT_KINDS
    svg: bool = False


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _expr_of(doc: dict, key: str) -> str | None:
    if key not in doc:
        return None
    value = doc[key]
    if isinstance(value, str):
        return value
    if isinstance(value, dict) and isinstance(value.get("expr"), str):
        return value["expr"]
    raise RunSpecError(
        f"{key} must be a measure expression string or a table with an 'expr' key")


def parse_run_spec(text: str) -> RunSpec:
    """Parse and validate a TOML run specification."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise RunSpecError(f"config parse error: {exc}") from exc

    mu0_expr = _expr_of(doc, "mu0")
    nu_expr = _expr_of(doc, "nu")
    missing = [k for k, v in (("mu0", mu0_expr), ("nu", nu_expr)) if v is None]
    if missing:
        raise RunSpecError("missing required keys: " + ", ".join(missing))
    unknown_top = sorted(set(doc) - {"mu0", "nu", "solver", "output", *_SOLVER_KEYS})
    if unknown_top:
        raise RunSpecError("unknown keys: " + ", ".join(unknown_top))

    solver_tbl = doc.get("solver", {})
    if not isinstance(solver_tbl, dict):
        raise RunSpecError("[solver] must be a table")
    params: dict = {}
    for key in _SOLVER_KEYS:
        if key in doc and not isinstance(doc[key], dict):
            params[key] = doc[key]
        if key in solver_tbl:
            params[key] = solver_tbl[key]
    unknown = sorted(set(solver_tbl) - set(_SOLVER_KEYS))
    if unknown:
        raise RunSpecError("unknown solver keys: " + ", ".join(unknown))

    scheme_name = params.pop("scheme", "implicit")
    try:
        scheme = Scheme(scheme_name)
    except ValueError:
        valid = ", ".join(s.value for s in Scheme)
        raise RunSpecError(
            f"unknown scheme {scheme_name!r}; valid schemes: {valid}") from None
    try:
        policy = MonotonicityPolicy(params.pop("monotonicity_policy", "warn"))
    except ValueError:
        valid = ", ".join(p.value for p in MonotonicityPolicy)
        raise RunSpecError(
            f"unknown monotonicity policy; valid policies: {valid}") from None
    snapshots = params.pop("snapshots", None)
    snapshot_times = params.pop("snapshot_times", None)
    try:
        config = SolverConfig(
            scheme=scheme,
            tau=float(params.pop("tau", 0.01)),
            n=int(params.pop("n", 1000)),
            t_end=float(params.pop("t_end", 1.0)),
            bisect_atol=float(params.pop("bisect_atol", 1e-12)),
            monotonicity_policy=policy,
            snapshot_steps=tuple(int(k) for k in snapshots) if snapshots is not None else None,
            snapshot_stride=int(params["snapshot_stride"]) if "snapshot_stride" in params else None,
            snapshot_times=tuple(float(x) for x in snapshot_times) if snapshot_times is not None else None,
        )
    except (TypeError, ValueError) as exc:
        raise RunSpecError(f"invalid solver parameters: {exc}") from exc

    total_steps = int(round(config.t_end / config.tau))
    if config.snapshot_steps is not None and any(
            k < 0 or k > total_steps for k in config.snapshot_steps):
        raise RunSpecError(
            f"snapshot steps must lie in [0, {total_steps}] for tau={config.tau}, "
            f"t_end={config.t_end}")
    if config.snapshot_times is not None and any(
            x < 0.0 or x > config.t_end + 1e-12 for x in config.snapshot_times):
        raise RunSpecError("snapshot times must lie in [0, t_end]")

    mu0 = parse_measure(mu0_expr)
    nu = parse_measure(nu_expr)
    if scheme is Scheme.EXPLICIT_EULER and nu.has_atoms:
        raise AtomicTargetError(
            "the explicit scheme needs a target with a continuous CDF; "
            "use the implicit or exact-discrete scheme for atomic targets")
    if scheme is Scheme.CLOSED_FORM_DISCRETE and nu.atom_decomposition() is None:
        raise NotDiscreteTargetError(
            "the exact-discrete scheme needs a purely atomic target")

    output_tbl = doc.get("output", {})
    if not isinstance(output_tbl, dict):
        raise RunSpecError("[output] must be a table")
    unknown = sorted(set(output_tbl) - set(_OUTPUT_KEYS))
    if unknown:
        raise RunSpecError("unknown output keys: " + ", ".join(unknown))
    emit = output_tbl.get("emit", list(_EMIT_KINDS))
    if (not isinstance(emit, list)
            or any(kind not in _EMIT_KINDS for kind in emit)):
        raise RunSpecError("emit must be a list drawn from: " + ", ".join(_EMIT_KINDS))
    outdir = output_tbl.get("outdir")

    return RunSpec(
        mu0_expr=mu0_expr,
        nu_expr=nu_expr,
        mu0=mu0,
        nu=nu,
        config=config,
        outdir=Path(outdir) if outdir is not None else None,
        emit=tuple(emit),
        svg=bool(output_tbl.get("svg", False)),
    )


# ---------------------------------------------------------------------------
# built-in example flows


@dataclass(frozen=True)
class Preset:
    name: str
    mu0: str
    nu: str
    blurb: str


PRESETS: dict[str, Preset] = {
    p.name: p for p in (
        Preset("gauss-shift", "gaussian(5, 1)", "gaussian(-5, 1)",
               "Gaussians with equal variance and shifted means"),
        Preset("laplace-shift", "laplace(5, 1)", "laplace(-5, 1)",
               "Laplace distributions with shifted locations"),
        Preset("unif-to-unif", "uniform(0, 1)", "uniform(2, 3)",
               "uniform distributions with disjoint supports"),
        Preset("gauss-scales", "gaussian(0, 0.7071067811865476)",
               "gaussian(0, 1.4142135623730951)",
               "Gaussians with equal mean and different scales"),
        Preset("bimodal-to-gauss",
               "0.5*gaussian(-10, 1) + 0.5*gaussian(10, 1)", "gaussian(0, 1)",
               "symmetric two-mode mixture flowing to one mode"),
        Preset("gauss-to-bimodal",
               "gaussian(0, 1)", "0.5*gaussian(-10, 1) + 0.5*gaussian(10, 1)",
               "one mode flowing to a symmetric two-mode mixture"),
        Preset("folded-norm", "foldednormal(0)", "foldednormal(2)",
               "folded normal distributions (supports bounded below)"),
        Preset("dirac-to-dirac", "dirac(-1)", "dirac(0)",
               "single atom to single atom, exactly solvable"),
        Preset("three-to-two-diracs",
               "1/3*dirac(-1) + 1/3*dirac(1/2) + 1/3*dirac(2)",
               "1/4*dirac(0) + 3/4*dirac(1)",
               "three atoms to two atoms, exactly solvable"),
        Preset("dirac-to-unif", "dirac(0)", "uniform(0, 1)",
               "single atom smoothing out to a uniform distribution"),
    )
}

_PRESET_SNAPSHOT_STEPS = (10, 100, 200, 500, 1000, 10000)


def preset_run_specs(name: str, outdir: Path, tau: float = 0.01, n: int = 1000,
                     t_end: float = 100.0, svg: bool = False) -> list[RunSpec]:
    """Expand a preset into per-scheme run specs (implicit plus explicit for
    continuous targets, the exact solver for purely atomic ones)."""
    if name not in PRESETS:
        raise RunSpecError(
            f"unknown preset {name!r}; valid presets: " + ", ".join(sorted(PRESETS)))
    preset = PRESETS[name]
    mu0 = parse_measure(preset.mu0)
    nu = parse_measure(preset.nu)
    total = int(round(t_end / tau))
    steps = tuple(k for k in _PRESET_SNAPSHOT_STEPS if k <= total)
    schemes = [Scheme.IMPLICIT_EULER]
    if nu.atom_decomposition() is not None:
        schemes.append(Scheme.CLOSED_FORM_DISCRETE)
    elif not nu.has_atoms:
        schemes.append(Scheme.EXPLICIT_EULER)
    specs = []
    for scheme in schemes:
        config = SolverConfig(scheme=scheme, tau=tau, n=n, t_end=t_end,
                              snapshot_steps=steps)
        specs.append(RunSpec(
            mu0_expr=preset.mu0, nu_expr=preset.nu, mu0=mu0, nu=nu, config=config,
            outdir=outdir / name / scheme.value, svg=svg))
    return specs


# ---------------------------------------------------------------------------
# exporters


def emit_plot_data(traj: FlowTrajectory, kind: str, outdir: Path,
                   svg: bool = False) -> list[Path]:
    """Write one CSV (and optionally one SVG) per snapshot.

    ``quantile`` files hold `s,g` rows; ``density`` files hold
    `kind,x_lo,x_hi,density,mass` rows where atom rows carry an infinite
    density and their mass, and segment rows the piecewise density.
    """
    if kind not in ("quantile", "density"):
        raise ValueError("kind must be 'quantile' or 'density'")
    outdir.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []
    for idx, (time, state) in enumerate(zip(traj.times, traj.states)):
        stem = f"{kind}_{idx:03d}_t{time:g}"
        csv_path = outdir / f"{stem}.csv"
        if kind == "quantile":
            lines = ["s,g"]
            lines.extend(f"{_fmt(si)},{_fmt(gi)}" for si, gi in zip(state.s, state.values))
            svg_text = _quantile_svg(state.s, state.values, f"t = {time:g}") if svg else None
        else:
            if not state.is_monotone():
                state = QuantileGrid(isotonic_projection(state.values))
            est = density_and_atoms(state)
            lines = ["kind,x_lo,x_hi,density,mass"]
            for x_lo, x_hi, dens in est.segments:
                lines.append(f"ac,{_fmt(x_lo)},{_fmt(x_hi)},{_fmt(dens)},"
                             f"{_fmt(dens * (x_hi - x_lo))}")
            for x, mass in est.atoms:
                lines.append(f"atom,{_fmt(x)},{_fmt(x)},{_fmt(math.inf)},{_fmt(mass)}")
            svg_text = _density_svg(est, f"t = {time:g}") if svg else None
        csv_path.write_text("\n".join(lines) + "\n")
        paths.append(csv_path)
        if svg_text is not None:
            svg_path = outdir / f"{stem}.svg"
            svg_path.write_text(svg_text)
            paths.append(svg_path)
    return paths


def _write_diagnostics_csv(traj: FlowTrajectory, path: Path):
    lines = ["step,time,F,W2_to_target,mono_violations,supp_lo,supp_hi"]
    for rec in traj.diagnostics:
        lines.append(
            f"{rec.step},{_fmt(rec.time)},{_fmt(rec.functional_value)},"
            f"{_fmt(rec.w2_to_target)},{rec.monotonicity_violations},"
            f"{_fmt(rec.support_lo)},{_fmt(rec.support_hi)}")
    path.write_text("\n".join(lines) + "\n")


def _write_checks_csv(checks: list[BoundCheck], path: Path):
    lines = ["check,time,observed,bound,slack,status"]
    for c in checks:
        lines.append(f"{c.check},{_fmt(c.time)},{_fmt(c.observed)},"
                     f"{_fmt(c.bound)},{_fmt(c.slack)},{c.status}")
    path.write_text("\n".join(lines) + "\n")


def execute_run(spec: RunSpec) -> tuple[FlowTrajectory, list[BoundCheck], list[Path]]:
    """Run one spec, evaluate its checks, and write the requested files."""
    traj = run_flow(spec.mu0, spec.nu, spec.config)
    checks = check_trajectory(traj)
    files: list[Path] = []
    if spec.outdir is not None:
        outdir = spec.outdir
        outdir.mkdir(parents=True, exist_ok=True)
        if "quantiles" in spec.emit:
            files += emit_plot_data(traj, "quantile", outdir, spec.svg)
        if "densities" in spec.emit:
            files += emit_plot_data(traj, "density", outdir, spec.svg)
        if "diagnostics" in spec.emit:
            path = outdir / "diagnostics.csv"
            _write_diagnostics_csv(traj, path)
            files.append(path)
        if "checks" in spec.emit:
            path = outdir / "checks.csv"
            _write_checks_csv(checks, path)
            files.append(path)
        manifest = {
            "mu0": spec.mu0_expr,
            "nu": spec.nu_expr,
            "scheme": spec.config.scheme.value,
            "tau": spec.config.tau,
            "n": spec.config.n,
            "t_end": spec.config.t_end,
            "snapshot_times": [float(x) for x in traj.times],
            "notes": list(traj.notes),
            "files": sorted(p.name for p in files),
        }
        path = outdir / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        files.append(path)
    return traj, checks, files


def run_preset(name: str, outdir: Path, tau: float = 0.01, n: int = 1000,
               t_end: float = 100.0, svg: bool = False) -> list[BoundCheck]:
    """Execute all scheme variants of a preset; returns the merged checks."""
    all_checks: list[BoundCheck] = []
    for spec in preset_run_specs(name, outdir, tau=tau, n=n, t_end=t_end, svg=svg):
        _, checks, _ = execute_run(spec)
        all_checks.extend(checks)
    return all_checks


# ---------------------------------------------------------------------------
# minimal self-contained SVG rendering (polyline / area + atom spikes)

_SVG_W, _SVG_H, _SVG_M = 640, 420, 50


def _svg_open(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<text x="{_SVG_W // 2}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]


def _axis_lines(lab_x: tuple[str, str], lab_y: tuple[str, str]) -> list[str]:
    parts = [
        f'<line x1="{_SVG_M}" y1="{_SVG_H - _SVG_M}" x2="{_SVG_W - _SVG_M}" '
        f'y2="{_SVG_H - _SVG_M}" stroke="black" stroke-width="1"/>',
        f'<line x1="{_SVG_M}" y1="{_SVG_M}" x2="{_SVG_M}" '
        f'y2="{_SVG_H - _SVG_M}" stroke="black" stroke-width="1"/>',
        f'<text x="{_SVG_M}" y="{_SVG_H - _SVG_M + 16}" font-family="sans-serif" '
        f'font-size="11" text-anchor="middle">{lab_x[0]}</text>',
        f'<text x="{_SVG_W - _SVG_M}" y="{_SVG_H - _SVG_M + 16}" '
        f'font-family="sans-serif" font-size="11" text-anchor="middle">{lab_x[1]}</text>',
        f'<text x="{_SVG_M - 6}" y="{_SVG_H - _SVG_M}" font-family="sans-serif" '
        f'font-size="11" text-anchor="end">{lab_y[0]}</text>',
        f'<text x="{_SVG_M - 6}" y="{_SVG_M + 4}" font-family="sans-serif" '
        f'font-size="11" text-anchor="end">{lab_y[1]}</text>',
    ]
    return parts


def _affine(lo: float, hi: float, out_lo: float, out_hi: float):
    span = hi - lo
    if span <= 0.0:
        mid = 0.5 * (out_lo + out_hi)
        return lambda v: mid
    scale = (out_hi - out_lo) / span
    return lambda v: out_lo + (v - lo) * scale

def _quantile_svg(s: np.ndarray, g: np.ndarray, title: str) -> str:
    g_lo, g_hi = float(np.min(g)), float(np.max(g))
    sx = _affine(0.0, 1.0, _SVG_M, _SVG_W - _SVG_M)
    sy = _affine(g_lo, g_hi, _SVG_H - _SVG_M, _SVG_M)
    pts = " ".join(f"{sx(float(a)):.2f},{sy(float(b)):.2f}" for a, b in zip(s, g))
    parts = _svg_open(title)
    parts += _axis_lines(("0", "1"), (f"{g_lo:.4g}", f"{g_hi:.4g}"))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="#b22222" '
                 f'stroke-width="1.5"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _density_svg(est, title: str) -> str:
    seg = est.segments
    atoms = est.atoms
    xs: list[float] = []
    if seg.size:
        xs += [float(seg[:, 0].min()), float(seg[:, 1].max())]
    if atoms.size:
        xs += [float(atoms[:, 0].min()), float(atoms[:, 0].max())]
    if not xs:
        xs = [0.0, 1.0]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi <= x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    top = max([float(seg[:, 2].max()) if seg.size else 0.0] +
              [float(atoms[:, 1].max()) if atoms.size else 0.0] + [1e-12])
    sx = _affine(x_lo, x_hi, _SVG_M, _SVG_W - _SVG_M)
    sy = _affine(0.0, top, _SVG_H - _SVG_M, _SVG_M)
    parts = _svg_open(title)
    parts += _axis_lines((f"{x_lo:.4g}", f"{x_hi:.4g}"), ("0", f"{top:.4g}"))
    base = _SVG_H - _SVG_M
    for lo, hi, dens in seg:
        x0, x1 = sx(float(lo)), sx(float(hi))
        y = sy(float(dens))
        parts.append(f'<rect x="{x0:.2f}" y="{y:.2f}" width="{x1 - x0:.2f}" '
                     f'height="{base - y:.2f}" fill="#4682b4" fill-opacity="0.55"/>')
    for x, mass in atoms:
        px = sx(float(x))
        py = sy(float(mass))
        parts.append(f'<line x1="{px:.2f}" y1="{base}" x2="{px:.2f}" y2="{py:.2f}" '
                     f'stroke="#b22222" stroke-width="2.5"/>')
        parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="3.5" fill="#b22222"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flow",
        description="MMD gradient flows toward 1-d targets on the quantile grid")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a TOML run specification")
    run_p.add_argument("config", type=Path, help="path to a TOML run spec")
    run_p.add_argument("--outdir", type=Path, default=None,
                       help="override the output directory")
    run_p.add_argument("--svg", action="store_true", help="also render SVG plots")
    run_p.add_argument("--strict", action="store_true",
                       help="exit with status 4 if any check fails")

    preset_p = sub.add_parser("preset", help="run a named built-in preset")
    preset_p.add_argument("name", help="preset name (see 'flow presets')")
    preset_p.add_argument("--outdir", type=Path, default=Path("runs"))
    preset_p.add_argument("--tau", type=float, default=0.01)
    preset_p.add_argument("--n", type=int, default=1000)
    preset_p.add_argument("--t-end", type=float, default=100.0)
    preset_p.add_argument("--svg", action="store_true")
    preset_p.add_argument("--strict", action="store_true")

    sub.add_parser("presets", help="list the available presets")
    return parser


def _checks_failed(checks: list[BoundCheck]) -> list[BoundCheck]:
    return [c for c in checks if c.status == "fail"]


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            for name in sorted(PRESETS):
                p = PRESETS[name]
                print(f"{name:22s} {p.mu0}  ->  {p.nu}   ({p.blurb})")
            return EXIT_OK

        if args.command == "preset":
            checks = run_preset(args.name, args.outdir, tau=args.tau, n=args.n,
                                t_end=args.t_end, svg=args.svg)
            failed = _checks_failed(checks)
            print(f"preset {args.name}: {len(checks)} checks, "
                  f"{len(failed)} failed -> {args.outdir / args.name}")
            if failed and args.strict:
                for c in failed:
                    print(f"  FAIL {c.check} at t={c.time:g}: observed {c.observed!r} "
                          f"vs bound {c.bound!r}", file=sys.stderr)
                return EXIT_CHECKS
            return EXIT_OK

        # run
        spec = parse_run_spec(args.config.read_text())
        if args.outdir is not None or spec.outdir is None:
            outdir = args.outdir if args.outdir is not None else Path("runs") / "run"
            spec = RunSpec(spec.mu0_expr, spec.nu_expr, spec.mu0, spec.nu,
                           spec.config, outdir, spec.emit, spec.svg or args.svg)
        elif args.svg and not spec.svg:
            spec = RunSpec(spec.mu0_expr, spec.nu_expr, spec.mu0, spec.nu,
                           spec.config, spec.outdir, spec.emit, True)
        traj, checks, files = execute_run(spec)
        failed = _checks_failed(checks)
        print(f"run finished: {len(traj.states)} snapshots, {len(files)} files "
              f"-> {spec.outdir}")
        if failed and args.strict:
            for c in failed:
                print(f"  FAIL {c.check} at t={c.time:g}: observed {c.observed!r} "
                      f"vs bound {c.bound!r}", file=sys.stderr)
            return EXIT_CHECKS
        return EXIT_OK

    except (MonotonicityError, ArithmeticError, QuadratureError,
            DiscontinuityPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (RunSpecError, MeasureParseError, AtomicTargetError,
            NotDiscreteTargetError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
