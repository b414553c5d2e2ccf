"""Run-spec parsing, file emission, exit codes, and the console entry point."""

import json
import math
import shutil
import subprocess

import pytest

from mmdflow import AtomicTargetError, MonotonicityPolicy, NotDiscreteTargetError, Scheme
from mmdflow.cli import (
    EXIT_CHECKS,
    EXIT_CONFIG,
    EXIT_NUMERIC,
    EXIT_OK,
    PRESETS,
    RunSpec,
    RunSpecError,
    execute_run,
    main,
    parse_run_spec,
    run_preset,
)

MINIMAL = 'mu0 = "dirac(0)"\nnu = "uniform(0, 1)"\n'

SMALL_RUN = """
mu0 = "dirac(-1)"
nu = "dirac(0)"
tau = 0.1
n = 16
t_end = 0.4
"""

OVERSHOOT = """
mu0 = "uniform(0.45, 0.55)"
nu = "uniform(0, 1)"
scheme = "explicit"
tau = 1.0
n = 64
t_end = 3.0
monotonicity_policy = "project"
"""


# ---------------------------------------------------------------------------
# spec parsing


def test_parse_run_spec_defaults():
    spec = parse_run_spec(MINIMAL)
    assert spec.mu0_expr == "dirac(0)"
    assert spec.config.scheme is Scheme.IMPLICIT_EULER
    assert spec.config.tau == 0.01
    assert spec.config.n == 1000
    assert spec.config.t_end == 1.0
    assert spec.config.monotonicity_policy is MonotonicityPolicy.WARN
    assert spec.emit == ("quantiles", "densities", "diagnostics", "checks")
    assert spec.outdir is None and spec.svg is False


def test_parse_run_spec_solver_table_wins_over_flat_keys():
    spec = parse_run_spec("""
mu0 = "dirac(0)"
nu = "uniform(0, 1)"
tau = 0.5
[solver]
tau = 0.125
scheme = "pointwise-ode"
[output]
emit = ["diagnostics"]
svg = true
outdir = "plots"
""")
    assert spec.config.tau == 0.125
    assert spec.config.scheme is Scheme.POINTWISE_ODE
    assert spec.emit == ("diagnostics",)
    assert str(spec.outdir) == "plots"
    assert spec.svg is True


def test_parse_run_spec_measure_table_form():
    spec = parse_run_spec('mu0 = { expr = "gaussian(0, 1)" }\nnu = "uniform(0, 1)"\n')
    assert spec.mu0_expr == "gaussian(0, 1)"


@pytest.mark.parametrize("text,fragment", [
    ("", "missing required keys: mu0, nu"),
    ('nu = "uniform(0, 1)"', "missing required keys: mu0"),
    ("mu0 = [unclosed", "config parse error"),
    (MINIMAL + "bogus = 3\n", "unknown keys: bogus"),
    (MINIMAL + '[solver]\nstep_size = 0.1\n', "unknown solver keys: step_size"),
    (MINIMAL + '[output]\nformat = "csv"\n', "unknown output keys: format"),
    (MINIMAL + 'scheme = "rk4"\n', "valid schemes: implicit, explicit"),
    (MINIMAL + 'monotonicity_policy = "clip"\n', "valid policies"),
    (MINIMAL + "tau = -1.0\n", "invalid solver parameters"),
    (MINIMAL + "snapshots = [5, 500]\n", "snapshot steps must lie in [0, 100]"),
    (MINIMAL + "snapshot_times = [2.5]\n", "snapshot times must lie in [0, t_end]"),
    (MINIMAL + 'snapshots = [5]\nsnapshot_stride = 2\n', "at most one"),
    (MINIMAL + '[output]\nemit = ["movies"]\n', "emit must be a list drawn from"),
    ("mu0 = 3\nnu = \"uniform(0, 1)\"\n", "measure expression string"),
])
def test_parse_run_spec_rejects(text, fragment):
    with pytest.raises(RunSpecError, match=None) as exc_info:
        parse_run_spec(text)
    assert fragment in str(exc_info.value)


def test_parse_run_spec_scheme_target_compatibility():
    with pytest.raises(AtomicTargetError):
        parse_run_spec('mu0 = "dirac(0)"\nnu = "dirac(1)"\nscheme = "explicit"\n')
    with pytest.raises(NotDiscreteTargetError):
        parse_run_spec('mu0 = "dirac(0)"\nnu = "uniform(0, 1)"\nscheme = "exact-discrete"\n')


def test_parse_run_spec_bad_measure_expression():
    from mmdflow import MeasureParseError
    with pytest.raises(MeasureParseError):
        parse_run_spec('mu0 = "dirac(0"\nnu = "uniform(0, 1)"\n')


# ---------------------------------------------------------------------------
# file emission


@pytest.fixture()
def small_run_dir(tmp_path):
    spec = parse_run_spec(SMALL_RUN)
    spec = RunSpec(spec.mu0_expr, spec.nu_expr, spec.mu0, spec.nu, spec.config,
                   outdir=tmp_path / "out", emit=spec.emit, svg=False)
    traj, checks, files = execute_run(spec)
    return tmp_path / "out", traj, checks, files


def test_emitted_file_inventory(small_run_dir):
    outdir, traj, checks, files = small_run_dir
    names = sorted(p.name for p in outdir.iterdir())
    assert "diagnostics.csv" in names
    assert "checks.csv" in names
    assert "manifest.json" in names
    quantiles = [n for n in names if n.startswith("quantile_")]
    densities = [n for n in names if n.startswith("density_")]
    assert len(quantiles) == len(traj.times) == 5
    assert len(densities) == 5
    assert "quantile_000_t0.csv" in quantiles


def test_diagnostics_csv_contract(small_run_dir):
    outdir, traj, _, _ = small_run_dir
    lines = (outdir / "diagnostics.csv").read_text().splitlines()
    assert lines[0] == "step,time,F,W2_to_target,mono_violations,supp_lo,supp_hi"
    assert len(lines) == 1 + len(traj.diagnostics)
    rows = [line.split(",") for line in lines[1:]]
    assert [int(r[0]) for r in rows] == list(range(5))
    f_vals = [float(r[2]) for r in rows]
    assert all(b <= a + 1e-12 for a, b in zip(f_vals, f_vals[1:]))
    w2 = [float(r[3]) for r in rows]
    assert w2[0] == pytest.approx(1.0) and w2[-1] < w2[0]
    assert all(int(r[4]) == 0 for r in rows)


def test_checks_csv_contract(small_run_dir):
    outdir, _, checks, _ = small_run_dir
    lines = (outdir / "checks.csv").read_text().splitlines()
    assert lines[0] == "check,time,observed,bound,slack,status"
    assert len(lines) == 1 + len(checks)
    statuses = {line.rsplit(",", 1)[1] for line in lines[1:]}
    assert statuses <= {"pass", "fail", "skipped"}
    assert "fail" not in statuses


def test_quantile_csv_contract(small_run_dir):
    outdir, traj, _, _ = small_run_dir
    lines = (outdir / "quantile_000_t0.csv").read_text().splitlines()
    assert lines[0] == "s,g"
    assert len(lines) == 1 + traj.n
    s0, g0 = map(float, lines[1].split(","))
    assert s0 == pytest.approx(0.5 / traj.n)
    assert g0 == -1.0


def test_density_csv_atoms_carry_infinite_density(small_run_dir):
    outdir, _, _, _ = small_run_dir
    lines = (outdir / "density_000_t0.csv").read_text().splitlines()
    assert lines[0] == "kind,x_lo,x_hi,density,mass"
    atom_rows = [line for line in lines[1:] if line.startswith("atom,")]
    assert atom_rows, "a pure atom state must emit atom rows"
    _, x_lo, x_hi, dens, mass = atom_rows[0].split(",")
    assert float(x_lo) == float(x_hi) == -1.0
    assert math.isinf(float(dens))
    assert float(mass) == pytest.approx(1.0)


def test_manifest_contract(small_run_dir):
    outdir, traj, _, _ = small_run_dir
    manifest = json.loads((outdir / "manifest.json").read_text())
    assert set(manifest) == {"mu0", "nu", "scheme", "tau", "n", "t_end",
                             "snapshot_times", "notes", "files"}
    assert manifest["scheme"] == "implicit"
    assert manifest["snapshot_times"] == [float(t) for t in traj.times]
    assert manifest["files"] == sorted(manifest["files"])
    assert "manifest.json" not in manifest["files"]


def test_emission_is_deterministic(tmp_path):
    def run_into(sub):
        spec = parse_run_spec(SMALL_RUN)
        spec = RunSpec(spec.mu0_expr, spec.nu_expr, spec.mu0, spec.nu, spec.config,
                       outdir=tmp_path / sub, emit=spec.emit, svg=False)
        execute_run(spec)
        return tmp_path / sub

    a, b = run_into("a"), run_into("b")
    for pa in sorted(a.iterdir()):
        assert (b / pa.name).read_bytes() == pa.read_bytes(), pa.name


def test_svg_emission(tmp_path):
    spec = parse_run_spec(SMALL_RUN)
    spec = RunSpec(spec.mu0_expr, spec.nu_expr, spec.mu0, spec.nu, spec.config,
                   outdir=tmp_path, emit=("quantiles", "densities"), svg=True)
    execute_run(spec)
    q_svg = (tmp_path / "quantile_000_t0.svg").read_text()
    assert q_svg.startswith("<svg") and "polyline" in q_svg
    d_svg = (tmp_path / "density_000_t0.svg").read_text()
    assert d_svg.startswith("<svg")


# ---------------------------------------------------------------------------
# exit codes and entry point


def test_main_run_ok(tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text(SMALL_RUN)
    rc = main(["run", str(cfg), "--outdir", str(tmp_path / "out")])
    assert rc == EXIT_OK
    assert "run finished" in capsys.readouterr().out
    assert (tmp_path / "out" / "manifest.json").exists()


def test_main_unknown_preset_lists_valid_names(tmp_path, capsys):
    rc = main(["preset", "nope", "--outdir", str(tmp_path)])
    assert rc == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "unknown preset" in err
    assert "dirac-to-unif" in err


def test_main_bad_spec_is_config_error(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("mu0 = [unclosed")
    rc = main(["run", str(cfg)])
    assert rc == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_main_missing_file_is_config_error(tmp_path, capsys):
    rc = main(["run", str(tmp_path / "absent.toml")])
    assert rc == EXIT_CONFIG
    assert "i/o error" in capsys.readouterr().err


def test_main_monotonicity_blowup_is_numerical_error(tmp_path, capsys):
    cfg = tmp_path / "blowup.toml"
    cfg.write_text("""
mu0 = "gaussian(0, 1)"
nu = "uniform(0, 1)"
scheme = "explicit"
tau = 5.0
n = 64
t_end = 20.0
monotonicity_policy = "error"
""")
    rc = main(["run", str(cfg), "--outdir", str(tmp_path / "out")])
    assert rc == EXIT_NUMERIC
    assert "numerical failure" in capsys.readouterr().err


def test_main_strict_fails_on_violated_checks(tmp_path, capsys):
    cfg = tmp_path / "overshoot.toml"
    cfg.write_text(OVERSHOOT)
    rc = main(["run", str(cfg), "--outdir", str(tmp_path / "strict"), "--strict"])
    assert rc == EXIT_CHECKS
    assert "FAIL" in capsys.readouterr().err

    rc = main(["run", str(cfg), "--outdir", str(tmp_path / "loose")])
    assert rc == EXIT_OK
    checks = (tmp_path / "loose" / "checks.csv").read_text().splitlines()
    failing = [line for line in checks if line.endswith(",fail")]
    assert any(line.startswith("joint-hull-confinement,") for line in failing)
    capsys.readouterr()


def test_main_presets_listing(capsys):
    rc = main(["presets"])
    assert rc == EXIT_OK
    out = capsys.readouterr().out
    for name in PRESETS:
        assert name in out
    assert len(PRESETS) == 10


def test_preset_command_writes_per_scheme_outputs(tmp_path, capsys):
    rc = main(["preset", "dirac-to-dirac", "--outdir", str(tmp_path),
               "--tau", "0.05", "--n", "32", "--t-end", "0.5"])
    assert rc == EXIT_OK
    assert "0 failed" in capsys.readouterr().out
    for scheme_dir in ("implicit", "exact-discrete"):
        assert (tmp_path / "dirac-to-dirac" / scheme_dir / "manifest.json").exists()


def test_run_preset_merges_checks(tmp_path):
    checks = run_preset("unif-to-unif", tmp_path, tau=0.1, n=32, t_end=0.5)
    assert all(c.status != "fail" for c in checks)
    # implicit plus explicit variant both contribute check families
    assert sum(c.check == "functional-decay" for c in checks) == 2


def test_console_script_installed():
    exe = shutil.which("flow")
    assert exe, "console script 'flow' should be on PATH"
    proc = subprocess.run([exe, "presets"], capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert "three-to-two-diracs" in proc.stdout
