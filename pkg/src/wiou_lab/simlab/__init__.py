"""Regression simulator: anchors around a fixed target center descend a loss."""

from .cases import (
    DEFAULT_RATIOS,
    DEFAULT_SCALES,
    CaseSet,
    RegressionCase,
    SimConfig,
    case_count,
    disc_covered_by_targets,
    generate_cases,
    point_in_target_union,
)
from .kernel import available_backends, evaluate_batch, get_backend
from .runner import (
    CurveRecord,
    ReportRow,
    SimRun,
    SimulationError,
    descend_case,
    final_report,
    run,
)

__all__ = [
    "DEFAULT_RATIOS",
    "DEFAULT_SCALES",
    "CaseSet",
    "CurveRecord",
    "RegressionCase",
    "ReportRow",
    "SimConfig",
    "SimRun",
    "SimulationError",
    "available_backends",
    "case_count",
    "descend_case",
    "disc_covered_by_targets",
    "evaluate_batch",
    "final_report",
    "generate_cases",
    "get_backend",
    "point_in_target_union",
    "run",
]
