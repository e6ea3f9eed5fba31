"""Metric engine, trajectory classifier, method comparison and reference oracle."""

from seqmem.diagnostics.classify import PATTERNS, PREFERENCE, Thresholds, classify_trajectory
from seqmem.diagnostics.compare import MethodProfile, pareto_filter, rank_profiles
from seqmem.diagnostics.matrix import EvalMatrix
from seqmem.diagnostics.metrics import (
    bwt,
    cumulative_curve,
    efficiency_summary,
    forgetting_approx,
    forgetting_exact,
    holdout_final,
    immediate_validity,
    mer,
    online_acc,
    ped,
    r_min,
    smallest_horizon,
    trend_ho,
)
from seqmem.diagnostics.oracle import oracle_metrics
from seqmem.diagnostics.report import DiagnosticReport, HoldoutSummary, build_report, summarize_holdout

__all__ = [
    "PATTERNS", "PREFERENCE", "Thresholds", "classify_trajectory",
    "MethodProfile", "pareto_filter", "rank_profiles",
    "EvalMatrix",
    "bwt", "cumulative_curve", "efficiency_summary", "forgetting_approx", "forgetting_exact",
    "holdout_final", "immediate_validity", "mer", "online_acc", "ped", "r_min",
    "smallest_horizon", "trend_ho",
    "oracle_metrics",
    "DiagnosticReport", "HoldoutSummary", "build_report", "summarize_holdout",
]
