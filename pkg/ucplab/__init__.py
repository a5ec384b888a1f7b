"""
ucplab

Numerical lab for spectral inequalities and quantitative unique continuation:
discrete Schrödinger and elliptic operators on cubes, uncertainty constants on
equidistributed ball arrangements, Carleman weight diagnostics, the ghost
dimension extension and a Shannon sampling benchmark.
"""

__version__ = "0.1.0"

from ucplab.geometry import BallArrangement, make_arrangement
from ucplab.grid import Domain, Grid, ScalarField
from ucplab.harness import ExperimentConfig, report_summary, run
from ucplab.observability import BoundParams, observe, uncertainty_constant
from ucplab.operators import build_elliptic, build_schrodinger
from ucplab.spectral import EnergyWindow, spectrum_below

__all__ = [
    "BallArrangement",
    "BoundParams",
    "Domain",
    "EnergyWindow",
    "ExperimentConfig",
    "Grid",
    "ScalarField",
    "build_elliptic",
    "build_schrodinger",
    "make_arrangement",
    "observe",
    "report_summary",
    "run",
    "spectrum_below",
    "uncertainty_constant",
]
