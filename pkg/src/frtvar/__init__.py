"""Randomization tests for treatment effect variation."""

__version__ = "0.1.0"

from .data import (
    CompletelyRandomized,
    ConstantEffect,
    Dataset,
    LinearEffect,
    ScienceTable,
    Stratified,
    StratumEffects,
    design_for,
    impute_science_table,
    realize_outcomes,
    validate_dataset,
)
from .errors import ConfigError, DataError, FrtError, NumericalError
from .frt import (
    FrtResult,
    GridSpec,
    PValueCurve,
    conditional_frt,
    draw_assignments,
    enumerate_assignments,
    frt_ci,
    frt_pi,
    frt_pvalue,
)
from .stats import StatisticSpec

__all__ = [
    "CompletelyRandomized", "ConstantEffect", "Dataset", "LinearEffect", "ScienceTable",
    "Stratified", "StratumEffects", "design_for", "impute_science_table", "realize_outcomes",
    "validate_dataset", "ConfigError", "DataError", "FrtError", "NumericalError", "FrtResult",
    "GridSpec", "PValueCurve", "conditional_frt", "draw_assignments", "enumerate_assignments",
    "frt_ci", "frt_pi", "frt_pvalue", "StatisticSpec",
]
