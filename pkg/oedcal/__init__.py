"""Optimal experimental designs for calibration models.

Designs are built on the response scale of a model known through its inverse
mean ``x = mu(y, theta)``, certified by the general equivalence theorem where
one applies, and transformed to the dose scale for reporting.
"""

__version__ = "0.1.0"  # x-release-please-version

from .calib_model import (
    CalibrationModel,
    ClosedFormModel,
    ExpressionModel,
    LinearModel,
    ParameterVector,
    RadiochromicModel,
    RegressorMode,
    Scale,
    available_models,
    get_model,
    register_model,
)
from .criteria import (
    CriterionKind,
    CriterionSpec,
    criterion_value,
    get_efficiency_bound,
    phi_c,
    phi_d,
    phi_gi,
    phi_vi,
    sensitivity_c,
    sensitivity_d,
    sensitivity_vi,
    var_inverse_prediction,
)
from .design_core import Design, InformationMatrix, efficiency, fim, merge_support, transform_design
from .errors import OedCalError
from .numerics import Interval
from .solvers import (
    DesignReport,
    SequenceFamily,
    SequenceSpec,
    SolverOptions,
    StepRule,
    WynnConfig,
    evaluate_fixed_design,
    optimize_sequence,
    reference_optima,
    solve_c_optimal,
    solve_d_optimal,
    solve_gi_optimal,
    solve_vi_optimal,
)

__all__ = [
    "__version__",
    "CalibrationModel",
    "ClosedFormModel",
    "ExpressionModel",
    "LinearModel",
    "ParameterVector",
    "RadiochromicModel",
    "RegressorMode",
    "Scale",
    "available_models",
    "get_model",
    "register_model",
    "CriterionKind",
    "CriterionSpec",
    "criterion_value",
    "get_efficiency_bound",
    "phi_c",
    "phi_d",
    "phi_gi",
    "phi_vi",
    "sensitivity_c",
    "sensitivity_d",
    "sensitivity_vi",
    "var_inverse_prediction",
    "Design",
    "InformationMatrix",
    "efficiency",
    "fim",
    "merge_support",
    "transform_design",
    "OedCalError",
    "Interval",
    "DesignReport",
    "SequenceFamily",
    "SequenceSpec",
    "SolverOptions",
    "StepRule",
    "WynnConfig",
    "evaluate_fixed_design",
    "optimize_sequence",
    "reference_optima",
    "solve_c_optimal",
    "solve_d_optimal",
    "solve_gi_optimal",
    "solve_vi_optimal",
]
