"""Synthetic dual system estimation with alternative allocation formulas."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    AllocationTable,
    CellCounts,
    FormulaKind,
    GeoHierarchy,
    SimConfig,
    StratumEstimate,
    StratumSurveyInputs,
    TwoStateScenario,
    validate_cells,
)
from .estimator import (  # noqa: E402
    aggregate_regions,
    allocate,
    allocate_all,
    check_normalization,
    correct_enumeration_rate,
    correction_factors,
    dse,
    estimate_all,
)

__all__ = [
    "AllocationTable",
    "CellCounts",
    "FormulaKind",
    "GeoHierarchy",
    "SimConfig",
    "StratumEstimate",
    "StratumSurveyInputs",
    "TwoStateScenario",
    "aggregate_regions",
    "allocate",
    "allocate_all",
    "check_normalization",
    "correct_enumeration_rate",
    "correction_factors",
    "dse",
    "estimate_all",
    "validate_cells",
]
