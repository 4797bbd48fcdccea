"""Stochastic actor-oriented models for international trade networks."""

__version__ = "0.1.0"

from .effects import EffectSpec
from .estimate import EstimationOptions, EstimationResult, estimate, score_test
from .netpanel import CompositionEvent, CovariateSet, NetworkPanel, build_panel, describe
from .simulate import generate_panel, simulate_panel

__all__ = [
    "CompositionEvent", "CovariateSet", "EffectSpec", "EstimationOptions", "EstimationResult",
    "NetworkPanel", "build_panel", "describe", "estimate", "generate_panel", "score_test",
    "simulate_panel",
]
