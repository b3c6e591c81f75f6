"""Asynchronous switching control for delayed 2D Roesser systems.

Design state-feedback gains through matrix inequalities, derive the average
dwell-time condition, and simulate the closed loop on the (i, j) grid.
"""

from .model import BoundaryConditions, ModeMatrices, SwitchedRoesserSystem, UncertaintyRealization
from .synthesis import SynthesisCertificate, SynthesisFailure, synthesize

__all__ = [
    "BoundaryConditions",
    "ModeMatrices",
    "SwitchedRoesserSystem",
    "SynthesisCertificate",
    "SynthesisFailure",
    "UncertaintyRealization",
    "synthesize",
]
__version__ = "0.1.0"
