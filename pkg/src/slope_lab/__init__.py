"""slope-lab: sorted-L1 (SLOPE) regression toolkit.

Library layout:

  sorted_l1        sorted-L1 norm, dual norm, prox with tie groups
  solvers          SLOPE / LASSO / ridge / bridge fits and cross-validation
  state_evolution  Monte-Carlo fixed points, phase thresholds, noise sensitivity
  datagen          seeded designs, signals, noise, and weight families
  experiments      declarative figure-style experiment runner (CSV + SVG)
  cli              `slope-lab` command-line entry point
"""

__version__ = "0.1.0"

from .datagen import (
    DesignSpec,
    SignalSpec,
    WeightSpec,
    gen_design,
    gen_noise,
    gen_signal,
    gen_weights,
    norm_quantile,
)
from .experiments import (
    EstimatorSpec,
    ExperimentSpec,
    ResultRow,
    ResultTable,
    SpecError,
    emit_csv,
    emit_svg,
    evaluate_assertions,
    load_spec,
    parse_csv,
    run_experiment,
    run_figure1,
    run_noise_sweep,
    spec_from_dict,
)
from .solvers import (
    FitResult,
    LinearModelInstance,
    cross_validate,
    fit_bridge,
    fit_lasso,
    fit_ridge,
    fit_slope,
    prox_power_penalty,
)
from .sorted_l1 import (
    ProxResult,
    WeightVector,
    as_weights,
    dual_sorted_l1_norm,
    isotonic_regression_nonincreasing,
    project_dual_ball,
    prox_gamma_derivative,
    prox_sorted_l1,
    prox_sorted_l1_value,
    sorted_l1_norm,
)
from .state_evolution import (
    BridgeAsymptote,
    MCRisk,
    MLambdaEstimate,
    SEProblem,
    SEState,
    bridge_large_noise_asymptote,
    m_lambda,
    m_lambda_at_chi,
    mc_risk,
    noise_sensitivity,
    optimal_risk,
    solve_se,
)

__all__ = [name for name in dir() if not name.startswith("_")]
