"""Wasserstein-2 gradient flows of the squared MMD with the negative
distance kernel, for one-dimensional measures evolved on a quantile grid.

The public surface re-exports the measure zoo and parser, the quantile-grid
embedding, the flow functional with its (sub)gradients, the four solvers,
the inequality checkers, and the CLI entry point.
"""

from .quadrature import QuadratureError, adaptive_simpson
from .measures import (
    Discrete,
    Empirical,
    Exponential,
    FoldedNormal,
    Gaussian,
    GridQuantile,
    Laplace,
    Measure,
    MeasureParseError,
    Mixture,
    Uniform,
    parse_measure,
)
from .grids import QuantileGrid, grid_inner, grid_norm, midpoints, sample_quantile_grid
from .flow_core import (
    AtomicTargetError,
    DensityEstimate,
    SubgradientSelection,
    Target,
    density_and_atoms,
    functional_F,
    gradient_continuous,
    kernel_self_energy,
    mmd_squared,
    subgradient,
    w2_distance,
)
from .solvers import (
    DiscontinuityPointError,
    FlowTrajectory,
    MonotonicityError,
    MonotonicityPolicy,
    NotDiscreteTargetError,
    Scheme,
    SolverConfig,
    StepRecord,
    closed_form_discrete,
    explicit_euler_step,
    implicit_euler_step,
    isotonic_projection,
    pointwise_ode_solve,
    run_flow,
    time_to_target,
)
from .diagnostics import (
    BoundCheck,
    LipschitzReport,
    check_trajectory,
    duality_check,
    grid_slack,
    lip_invariance_bound,
    lipschitz_estimate,
    smoothing_bound,
)
from .cli import PRESETS, RunSpec, RunSpecError, main, parse_run_spec, run_preset

__version__ = "0.1.0"

__all__ = [
    "QuadratureError",
    "adaptive_simpson",
    "Measure",
    "Discrete",
    "Empirical",
    "GridQuantile",
    "Uniform",
    "Gaussian",
    "Laplace",
    "Exponential",
    "FoldedNormal",
    "Mixture",
    "MeasureParseError",
    "parse_measure",
    "QuantileGrid",
    "midpoints",
    "sample_quantile_grid",
    "grid_norm",
    "grid_inner",
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
    "LipschitzReport",
    "BoundCheck",
    "grid_slack",
    "lipschitz_estimate",
    "smoothing_bound",
    "lip_invariance_bound",
    "check_trajectory",
    "duality_check",
    "RunSpec",
    "RunSpecError",
    "parse_run_spec",
    "PRESETS",
    "run_preset",
    "main",
    "__version__",
]
