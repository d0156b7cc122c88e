"""Kernel classification of partially observed functional data via Fourier filtering."""

__version__ = "0.1.0"

from importlib.resources import files as _files

from .curves import (
    CurveSet,
    MissingPattern,
    ObservedCurve,
    PatternCatalog,
    TimeGrid,
    detect_patterns,
    load_curveset,
    standard_catalog,
    quad_integral,
)
from .estimator import FragmentKernelClassifier
from .filtering import BasisSpec, FourierFilter, filter_curve, fourier_basis, score_table
from .kernel_classifier import FittedModel, KernelSpec, classify, kernel_eval, load_model, save_model, vote
from .model_selection import (
    RiskReport,
    SelectionGrid,
    d_max,
    empirical_risk,
    fit,
    fit_complete_case,
    select_params,
    split,
)


def example_data_path() -> str:
    """Path of the bundled long-format example (40 labelled curves, 101-node grid, three patterns)."""
    return str(_files(__name__) / "data" / "example_long.csv")


__all__ = [
    "BasisSpec",
    "CurveSet",
    "FittedModel",
    "FourierFilter",
    "FragmentKernelClassifier",
    "KernelSpec",
    "MissingPattern",
    "ObservedCurve",
    "PatternCatalog",
    "RiskReport",
    "SelectionGrid",
    "TimeGrid",
    "classify",
    "d_max",
    "detect_patterns",
    "empirical_risk",
    "example_data_path",
    "filter_curve",
    "fit",
    "fit_complete_case",
    "fourier_basis",
    "kernel_eval",
    "load_curveset",
    "load_model",
    "standard_catalog",
    "quad_integral",
    "save_model",
    "score_table",
    "select_params",
    "split",
    "vote",
]
