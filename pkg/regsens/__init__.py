"""
Sensitivity analysis for regression coefficients under omitted variables.

Computes identified sets for the long-regression coefficient under
proportional selection on observables and unobservables, breakdown points
for explain-away and sign-change conclusions, cumulative sets under bounds
on the selection ratio, and bias adjustments. A constructive oracle builds
full data-generating processes that certify the reported sets.
"""

__version__ = "0.1.0"

from .core.moments import (
    ColumnRoles,
    Dataset,
    MomentMatrix,
    R2Rule,
    RegressionSummary,
    load_dataset,
    partial_out_baseline,
    resolve_r2long,
    summarize,
)
from .core.osterset import (
    MagnitudeBound,
    SensitivitySpec,
    cumulative_set,
    delta_for_beta,
    identified_set,
    solve_identified_set,
)
from .core.breakdown import (
    bp_explain_away,
    bp_sign_change,
    breakdown_report,
    naive_breakdown,
    prop1_adjust,
)
from .core.oracle import FullDgp, construct_extension, implied_params, random_dgp

__all__ = [
    "ColumnRoles",
    "Dataset",
    "MomentMatrix",
    "R2Rule",
    "RegressionSummary",
    "load_dataset",
    "partial_out_baseline",
    "resolve_r2long",
    "summarize",
    "MagnitudeBound",
    "SensitivitySpec",
    "cumulative_set",
    "delta_for_beta",
    "identified_set",
    "solve_identified_set",
    "bp_explain_away",
    "bp_sign_change",
    "breakdown_report",
    "naive_breakdown",
    "prop1_adjust",
    "FullDgp",
    "construct_extension",
    "implied_params",
    "random_dgp",
]
