"""Contextual values for generalized quantum measurements.

Calibrate detector outcomes against an observable, form conditioned averages
with post-selection, extrapolate them to the weak limit and audit whether that
limit must equal the generalized weak value.
"""

from ._kernels import BACKEND
from .ctxfile import ContextFile, ContextFileError
from .cvsolve import (
    CalibrationError,
    CalibrationMatrix,
    ContextualValues,
    GIndependentContextError,
    InconsistentPinsError,
    OrderAnalysis,
    VarianceBound,
    build_F,
    null_space,
    order_analysis,
    solve_exact,
    solve_fixed,
    solve_pinv,
    variance_bound,
)
from .gexpr import GExpr, GExprDomainError, GExprError, GExprSyntaxError, GMatrixFn, evaluate, parse, taylor_coeffs
from .matcore import pseudoinverse, polar_decompose, principal_sqrt, spectral_decompose, svd, tolerances
from .measurement import (
    MeasurementContext,
    MeasurementError,
    Observable,
    PostSelection,
    State,
    conditioned_average,
    cv_moment,
    outcome_probs,
    povm_at,
)
from .weaklimit import (
    AuditReport,
    GridSpec,
    LimitEstimate,
    Verdict,
    aav_weak_value,
    audit,
    generalized_weak_value,
    weak_limit,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ContextFile", "ContextFileError",
    "CalibrationError", "CalibrationMatrix", "ContextualValues", "GIndependentContextError",
    "InconsistentPinsError", "OrderAnalysis", "VarianceBound", "build_F", "null_space", "order_analysis",
    "solve_exact", "solve_fixed", "solve_pinv", "variance_bound",
    "GExpr", "GExprDomainError", "GExprError", "GExprSyntaxError", "GMatrixFn", "evaluate", "parse",
    "taylor_coeffs",
    "pseudoinverse", "polar_decompose", "principal_sqrt", "spectral_decompose", "svd", "tolerances",
    "MeasurementContext", "MeasurementError", "Observable", "PostSelection", "State", "conditioned_average",
    "cv_moment", "outcome_probs", "povm_at",
    "AuditReport", "GridSpec", "LimitEstimate", "Verdict", "aav_weak_value", "audit",
    "generalized_weak_value", "weak_limit",
]
