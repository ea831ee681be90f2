"""Active-set dual method for subgradient-regularized convex regression."""

__version__ = "0.1.0"

from .augmentation import Orientation, Rule, RuleConfig, filter_violated, select_candidates
from .data_io import Dataset, ScalingRecord, gen_synthetic, load_csv, normalize, rmse, split
from .driver import (
    CertificationReport,
    DriverConfig,
    FitResult,
    FitTrace,
    TraceRecord,
    Variant,
    certify,
    run,
    should_switch,
)
from .dual_solver import Method, SolveKind, SolveMode, SolveReport, solve_reduced
from .primal_cert import MaxAffineModel, duality_gap, feasibilize, predict
from .problem import ActiveSet, PrimalPoint, ProblemData, build_problem, eval_dual, eval_primal, kkt_map

__all__ = [
    "ActiveSet", "CertificationReport", "Dataset", "DriverConfig", "FitResult", "FitTrace",
    "MaxAffineModel", "Method", "Orientation", "PrimalPoint", "ProblemData", "Rule",
    "RuleConfig", "ScalingRecord", "SolveKind", "SolveMode", "SolveReport", "TraceRecord",
    "Variant", "build_problem", "certify", "duality_gap", "eval_dual", "eval_primal",
    "feasibilize", "filter_violated", "gen_synthetic", "kkt_map", "load_csv", "normalize",
    "predict", "rmse", "run", "select_candidates", "should_switch", "solve_reduced", "split",
]
