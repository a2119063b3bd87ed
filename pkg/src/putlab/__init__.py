"""Numerical laboratory for the American put exercise boundary near maturity
under a finite-activity jump-diffusion model."""

from .errors import (
    ConfigError,
    DbarPositive,
    DegenerateBoundary,
    MissingArtifact,
    NonConvergence,
    PutLabError,
    RegimeMismatch,
    RootBracketFailure,
    TruncationFailure,
)
from .model import (
    JumpAtom,
    LevyMeasure,
    LimitData,
    ModelParams,
    Regime,
    classify_regime,
    compute_dbar,
    limit_equation,
    model_from_dict,
    model_from_json,
    model_to_dict,
    solve_xi,
)
from .european import AlphaPoint, alpha_of_theta, exercise_gap, price_eu, solve_be
from .american import (
    BoundaryCurve,
    GridSpec,
    PriceSurface,
    extract_boundary,
    load_surface,
    premium_mc_check,
    save_surface,
    smooth_fit_check,
    solve_am,
)
from .auxiliary import (
    AuxGrid,
    AuxParams,
    AuxSolution,
    c_function,
    expected_local_time,
    local_time_bound_check,
    solve_aux,
    tree_oracle,
    tree_oracle_many,
)
from .asymptotics import (
    ExpansionReport,
    RateReport,
    RateRow,
    default_rate_grid,
    expansion_check,
    rate_experiment_neg,
    rate_experiment_zero,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
