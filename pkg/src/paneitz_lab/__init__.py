"""Numerical laboratory for prescribing Paneitz curvature on S^5 and S^6."""

from .bubble_kernel import Bubble, Configuration, beta_n, sobolev_mass
from .infinity_catalog import SCHEMA, enumerate_cpi, theorem_report
from .morse_analyzer import CurvatureField, find_critical_points
from .paneitz_functional import J_eval, J_expansion
from .reduced_flow import FlowParams, FlowState, integrate_flow

__all__ = [
    "Bubble", "Configuration", "CurvatureField", "FlowParams", "FlowState", "J_eval",
    "J_expansion", "SCHEMA", "beta_n", "enumerate_cpi", "find_critical_points",
    "integrate_flow", "sobolev_mass", "theorem_report",
]
__version__ = "0.1.0"
