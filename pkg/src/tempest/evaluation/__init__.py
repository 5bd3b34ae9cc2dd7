"""Scoring and experiment runners."""

from .metrics import EvalReport, LengthMismatch, EmptyInput, residual_histogram, rmse
from .experiments import (
    CurvePoint,
    ExperimentError,
    Setup,
    run_adding_cities,
    run_model_comparison,
    run_test_size_curve,
    run_weeks_curve,
)
